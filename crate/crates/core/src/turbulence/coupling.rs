//! Turbulence-to-mode coupling efficiency.
//!
//! Combines two fading mechanisms multiplicatively into `eta_turb`:
//! the residual-phase overlap `rho_phi` (how well the corrected wavefront
//! couples into the receive mode) and the aperture-averaged log-amplitude
//! factor `rho_chi` (scintillation). Phase vectors are drawn from the
//! [`ResidualPhaseModel`] covariance blocks, evaluated on the aperture grid,
//! and folded with a Gaussian mode through the overlap integral.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::{BufRead, Write};

use crate::channel::{DiscreteDistribution, DEFAULT_STEP_DB};
use crate::geometry::LinkGeometry;
use crate::rng::{streams, SeedTree};
use crate::turbulence::covariance::{sampling_factor, CorrectionKind, MmseConfig, ResidualPhaseModel};
use crate::turbulence::profile::TurbulenceProfile;
use crate::turbulence::zernike::{self, noll_index, ZernikeBasis};
use crate::{Error, Result};

/// Transmit-beam waist as a fraction of the aperture diameter.
pub const WAIST_RATIO_DEFAULT: f64 = 1.0 / 2.2;

/// Samples processed per matrix product when evaluating overlap integrals.
const SAMPLE_CHUNK: usize = 64;

/// Paired coupling-efficiency samples for one link configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSampleSet {
    /// Residual-phase overlap efficiencies, each in [0, 1].
    pub rho_phi: Vec<f64>,
    /// Log-amplitude factors, positive and occasionally above 1.
    pub rho_chi: Vec<f64>,
    /// Elementwise product of the two.
    pub eta_turb: Vec<f64>,
    /// Master seed the samples were drawn from.
    pub seed: u64,
}

impl CouplingSampleSet {
    /// Combines phase and log-amplitude samples drawn from the same seed.
    pub fn from_parts(rho_phi: Vec<f64>, rho_chi: Vec<f64>, seed: u64) -> Result<Self> {
        if rho_phi.len() != rho_chi.len() {
            return Err(Error::config(format!(
                "sample lists of different lengths: {} vs {}",
                rho_phi.len(),
                rho_chi.len()
            )));
        }
        if rho_phi.is_empty() {
            return Err(Error::config("empty coupling sample set".to_string()));
        }
        for &p in &rho_phi {
            if !(0.0..=1.0 + 1e-9).contains(&p) {
                return Err(Error::numerics(
                    "coupling samples",
                    format!("phase overlap {p} outside [0, 1]"),
                ));
            }
        }
        for &c in &rho_chi {
            if !(c > 0.0) {
                return Err(Error::numerics(
                    "coupling samples",
                    format!("log-amplitude factor {c} is not positive"),
                ));
            }
        }
        let eta_turb = rho_phi.iter().zip(&rho_chi).map(|(p, c)| p * c).collect();
        Ok(Self { rho_phi, rho_chi, eta_turb, seed })
    }

    pub fn len(&self) -> usize {
        self.eta_turb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_turb.is_empty()
    }

    /// Sample mean of `eta_turb`.
    pub fn mean_eta(&self) -> f64 {
        self.eta_turb.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (n-1 normalization) of `eta_turb`.
    pub fn std_eta(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_eta();
        let ss = self.eta_turb.iter().map(|&e| (e - mean) * (e - mean)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Writes `sample_index,rho_phi,rho_chi,eta_turb` rows, preceded by `#`
    /// comment lines (the seed is recorded as one of them).
    pub fn write_csv(&self, mut w: impl Write, comments: &[String]) -> Result<()> {
        writeln!(w, "# seed: {}", self.seed)?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "sample_index,rho_phi,rho_chi,eta_turb")?;
        for (i, (p, c)) in self.rho_phi.iter().zip(&self.rho_chi).enumerate() {
            writeln!(w, "{i},{p:.10e},{c:.10e},{:.10e}", p * c)?;
        }
        Ok(())
    }

    /// Reads a sample set written by [`CouplingSampleSet::write_csv`],
    /// returning the remaining comment lines alongside it.
    pub fn read_csv(r: impl BufRead) -> Result<(Self, Vec<String>)> {
        let mut comments = Vec::new();
        let mut seed = 0u64;
        let mut rho_phi = Vec::new();
        let mut rho_chi = Vec::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(s) = comment.strip_prefix("seed:") {
                    seed = s
                        .trim()
                        .parse()
                        .map_err(|_| Error::config(format!("unparseable seed comment: {line}")))?;
                } else {
                    comments.push(comment.to_string());
                }
                continue;
            }
            if !saw_header {
                if trimmed != "sample_index,rho_phi,rho_chi,eta_turb" {
                    return Err(Error::config(format!("unexpected header: {trimmed}")));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::config(format!("expected 4 fields, got: {trimmed}")));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::config(format!("bad number {s}")))
            };
            rho_phi.push(parse(fields[1])?);
            rho_chi.push(parse(fields[2])?);
        }
        let set = Self::from_parts(rho_phi, rho_chi, seed)?;
        Ok((set, comments))
    }
}

/// Draws log-amplitude coupling factors `rho_chi = e^{-sigma_chi2} e^{-2 chi}`
/// with `chi ~ N(-sigma_chi_ap2, sigma_chi_ap2)`, one counter-based substream
/// per sample.
pub fn sample_rho_chi(
    sigma_chi2: f64,
    sigma_chi_ap2: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(sigma_chi2 >= 0.0) || !(sigma_chi_ap2 >= 0.0) {
        return Err(Error::config(format!(
            "log-amplitude variances must be non-negative, got {sigma_chi2} and {sigma_chi_ap2}"
        )));
    }
    if n == 0 {
        return Err(Error::config("need at least one sample".to_string()));
    }
    let tree = SeedTree::new(seed);
    let scale = (-sigma_chi2).exp();
    let sigma = sigma_chi_ap2.sqrt();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree.stream(streams::LOG_AMPLITUDE, i as u64);
            let z: f64 = rng.sample(StandardNormal);
            let chi = -sigma_chi_ap2 + sigma * z;
            scale * (-2.0 * chi).exp()
        })
        .collect())
}

/// Square-root factorizations of the residual covariance blocks, used to draw
/// Gaussian mode-coefficient vectors.
struct PhaseSampler {
    /// Factor for modes `2..=ao_modes` (dense residual coupling).
    corrected: DMatrix<f64>,
    /// Per-sector factors for the block-diagonal uncorrected covariance,
    /// keyed by positions in the full coefficient vector.
    sectors: Vec<(Vec<usize>, DMatrix<f64>)>,
    total: usize,
    misalignment_tip: f64,
}

impl PhaseSampler {
    fn new(model: &ResidualPhaseModel) -> Result<Self> {
        let corrected = sampling_factor(&model.corrected_block)?;
        // The uncorrected block only couples modes of equal azimuthal order
        // and kind; factor each sector separately.
        let mut groups: std::collections::BTreeMap<(usize, u8), Vec<usize>> =
            std::collections::BTreeMap::new();
        for j in (model.ao_modes + 1)..=model.n_max {
            let idx = noll_index(j);
            let kind = match idx.angular {
                zernike::Angular::Axial => 0u8,
                zernike::Angular::Cosine => 1,
                zernike::Angular::Sine => 2,
            };
            groups.entry((idx.m, kind)).or_default().push(j);
        }
        let mut sectors = Vec::with_capacity(groups.len());
        for modes in groups.into_values() {
            let k = modes.len();
            let sub = DMatrix::from_fn(k, k, |a, b| {
                let row = modes[a] - model.ao_modes - 1;
                let col = modes[b] - model.ao_modes - 1;
                model.uncorrected_block[(row, col)]
            });
            let factor = sampling_factor(&sub)?;
            let positions = modes.iter().map(|&j| j - 2).collect();
            sectors.push((positions, factor));
        }
        Ok(Self {
            corrected,
            sectors,
            total: model.total_modes(),
            misalignment_tip: model.misalignment_tip,
        })
    }

    /// Fills `out` (length `total`) with one phase draw; `scratch` is reused
    /// between calls to avoid churn.
    fn sample_into(&self, rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.total);
        out.fill(0.0);
        let nc = self.corrected.nrows();
        scratch.clear();
        scratch.extend((0..nc).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for (r, o) in out[..nc].iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, z) in scratch.iter().enumerate() {
                acc += self.corrected[(r, c)] * z;
            }
            *o = acc;
        }
        for (positions, factor) in &self.sectors {
            let k = positions.len();
            scratch.clear();
            scratch.extend((0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
            for (r, &pos) in positions.iter().enumerate() {
                let mut acc = 0.0;
                for (c, z) in scratch.iter().enumerate() {
                    acc += factor[(r, c)] * z;
                }
                out[pos] = acc;
            }
        }
        if !out.is_empty() {
            out[0] += self.misalignment_tip;
        }
    }
}

/// Draws `n` residual-phase overlap efficiencies for the model.
///
/// Each sample evaluates
/// `rho_phi = e^{-sigma_sf^2} |sum w e^{i phi} M0|^2 / |sum w M0|^2`
/// over the aperture quadrature grid, where `M0` is the Gaussian transmit
/// mode of waist `waist_ratio * D` and the normalization references a flat
/// wavefront, so a zero-phase sample couples at exactly 1.
pub fn sample_coupling(
    model: &ResidualPhaseModel,
    basis: &ZernikeBasis,
    waist_ratio: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(waist_ratio > 0.0) {
        return Err(Error::config(format!("waist ratio must be positive, got {waist_ratio}")));
    }
    if n == 0 {
        return Err(Error::config("need at least one sample".to_string()));
    }
    if basis.max_noll_index < model.n_max {
        return Err(Error::config(format!(
            "basis covers modes through {}, model needs {}",
            basis.max_noll_index, model.n_max
        )));
    }
    let sampler = PhaseSampler::new(model)?;
    let grid = basis.grid();
    let modes = zernike::mode_matrix(&grid, 2, model.n_max);
    let total = model.total_modes();

    // Weighted Gaussian mode on the grid; flat-wavefront normalization uses
    // the same discrete sum.
    let wm0: Vec<f64> = grid
        .rho()
        .iter()
        .zip(grid.weights())
        .map(|(&rho, &w)| {
            let arg = rho / (2.0 * waist_ratio);
            w * (-arg * arg).exp()
        })
        .collect();
    let denominator: f64 = wm0.iter().sum();
    let sf_penalty = (-model.super_fitting_variance).exp();
    let tree = SeedTree::new(seed);

    let indices: Vec<usize> = (0..n).collect();
    let chunks: Vec<Vec<f64>> = indices
        .par_chunks(SAMPLE_CHUNK)
        .map(|chunk| {
            let mut coeffs = DMatrix::zeros(total, chunk.len());
            let mut scratch = Vec::with_capacity(total);
            let mut buf = vec![0.0; total];
            for (col, &sample_idx) in chunk.iter().enumerate() {
                let mut rng = tree.stream(streams::PHASE, sample_idx as u64);
                sampler.sample_into(&mut rng, &mut scratch, &mut buf);
                coeffs.column_mut(col).copy_from_slice(&buf);
            }
            let mut phases = DMatrix::zeros(grid.len(), chunk.len());
            phases.gemm(1.0, &modes, &coeffs, 0.0);
            chunk
                .iter()
                .enumerate()
                .map(|(col, _)| {
                    let column = phases.column(col);
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for (p, &w) in wm0.iter().enumerate() {
                        let (s, c) = column[p].sin_cos();
                        re += w * c;
                        im += w * s;
                    }
                    sf_penalty * (re * re + im * im) / (denominator * denominator)
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Samples the full turbulence efficiency `eta_turb = rho_phi * rho_chi` for
/// a link and returns both the raw samples and their histogram on the shared
/// attenuation grid.
pub fn turbulence_distribution(
    profile: &TurbulenceProfile,
    basis: &ZernikeBasis,
    ao_modes: usize,
    kind: CorrectionKind,
    geometry: &LinkGeometry,
    n: usize,
    seed: u64,
) -> Result<(CouplingSampleSet, DiscreteDistribution)> {
    geometry.validate()?;
    if (basis.aperture_diameter_m - geometry.ogs_diameter_m).abs()
        > 1e-9 * geometry.ogs_diameter_m
    {
        return Err(Error::config(format!(
            "basis aperture {} m does not match geometry aperture {} m",
            basis.aperture_diameter_m, geometry.ogs_diameter_m
        )));
    }
    let d = geometry.ogs_diameter_m;
    let model = ResidualPhaseModel::build(
        profile,
        d,
        ao_modes,
        kind,
        &MmseConfig::default(),
        geometry.point_ahead_rad,
        geometry.misalignment_tilt_amplitude(),
    )?;
    // The caller's basis fixes aperture and grid resolution; the sampling
    // basis must extend to the model's representation cutoff.
    let sampling_basis = if basis.max_noll_index >= model.n_max {
        basis.clone()
    } else {
        ZernikeBasis::new(model.n_max, basis.aperture_diameter_m, basis.grid_resolution)?
    };
    let rho_phi = sample_coupling(&model, &sampling_basis, WAIST_RATIO_DEFAULT, n, seed)?;
    let sigma_chi2 = profile.log_amplitude_variance();
    let sigma_ap2 = profile.aperture_averaged_variance(d / 2.0)?;
    let rho_chi = sample_rho_chi(sigma_chi2, sigma_ap2, n, seed)?;
    let set = CouplingSampleSet::from_parts(rho_phi, rho_chi, seed)?;
    let distribution = DiscreteDistribution::from_eta_samples(&set.eta_turb, DEFAULT_STEP_DB)?;
    Ok((set, distribution))
}
