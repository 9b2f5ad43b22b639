//! Residual pointing-jitter fading.
//!
//! The satellite tracking loop leaves a small random pointing error; at the
//! receiver plane it becomes a radial beam deflection with a Rayleigh
//! (Weibull shape-2) law. The deflection-to-transmission map is the overlap
//! of the offset far-field Gaussian spot with the receiver aperture,
//! normalized to its boresight value so the mean geometric capture is not
//! double-counted (that already sits in the fixed loss budget).

use crate::channel::{DiscreteDistribution, DEFAULT_STEP_DB};
use crate::error::{Error, Result};
use crate::geometry::LinkGeometry;
use crate::math::linear_interp;
use crate::math::quad::gauss_legendre;
use crate::rng::{streams, SeedTree};
use rand::Rng;
use std::io::Write;

/// How deflection maps to transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeflectionMap {
    /// Direct 2-D quadrature of the offset Gaussian over the aperture disk,
    /// tabulated once and interpolated.
    NumericOverlap,
    /// Stretched-exponential fit `eta0 * exp(-(r/beta)^alpha)` to the numeric
    /// curve; a fast closed-form stand-in.
    ShapeScaleFit,
}

/// Pointing-jitter model for one link.
#[derive(Debug, Clone)]
pub struct JitterModel {
    /// Rayleigh scale of the radial deflection at the receiver plane (m).
    pub sigma_r_m: f64,
    /// `1/e^2` intensity radius of the nominal spot at the receiver (m).
    pub beam_spot_radius_m: f64,
    /// Receiver aperture radius (m).
    pub aperture_radius_m: f64,
    /// Which deflection-to-transmission map to evaluate.
    pub map_kind: DeflectionMap,
    table_r: Vec<f64>,
    table_eta: Vec<f64>,
    eta0: f64,
    alpha: f64,
    beta: f64,
}

impl JitterModel {
    /// Builds the model, tabulating the overlap map and fitting the
    /// stretched-exponential stand-in.
    pub fn new(
        sigma_r_m: f64,
        beam_spot_radius_m: f64,
        aperture_radius_m: f64,
        map_kind: DeflectionMap,
    ) -> Result<Self> {
        if sigma_r_m < 0.0 {
            return Err(Error::config(format!("sigma_r must be >= 0, got {sigma_r_m}")));
        }
        if !(beam_spot_radius_m > 0.0) || !(aperture_radius_m > 0.0) {
            return Err(Error::config("spot and aperture radii must be positive".to_string()));
        }
        // Tabulate out to where either the Rayleigh tail or the map itself is
        // negligible.
        let r_max = (8.0 * sigma_r_m).max(3.0 * beam_spot_radius_m);
        let n_tab = 512;
        let table_r: Vec<f64> = (0..n_tab)
            .map(|i| r_max * i as f64 / (n_tab - 1) as f64)
            .collect();
        let table_eta: Vec<f64> = table_r
            .iter()
            .map(|&r| overlap_efficiency(r, beam_spot_radius_m, aperture_radius_m, 40))
            .collect();
        let eta0 = table_eta[0];
        let (alpha, beta) = fit_shape_scale(&table_r, &table_eta, eta0, sigma_r_m, beam_spot_radius_m);
        Ok(JitterModel {
            sigma_r_m,
            beam_spot_radius_m,
            aperture_radius_m,
            map_kind,
            table_r,
            table_eta,
            eta0,
            alpha,
            beta,
        })
    }

    /// Convenience constructor from the link geometry and jitter angle.
    pub fn from_geometry(
        geometry: &LinkGeometry,
        jitter_angle_rad: f64,
        map_kind: DeflectionMap,
    ) -> Result<Self> {
        JitterModel::new(
            geometry.displacement_for_angle_m(jitter_angle_rad),
            geometry.far_field_spot_radius_m(),
            geometry.sat_diameter_m / 2.0,
            map_kind,
        )
    }

    /// Transmission at boresight (pure truncation of the nominal spot).
    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    /// Fitted stretched-exponential parameters `(alpha, beta)`.
    pub fn fit_params(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    /// Raw transmission for a deflection `r`, per the configured map.
    pub fn eta_of_deflection(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        match self.map_kind {
            DeflectionMap::NumericOverlap => {
                if r >= *self.table_r.last().unwrap() {
                    // Beyond the table the Gaussian tail dominates; extrapolate
                    // with the fitted form to keep the map monotone.
                    self.eta0 * (-(r / self.beta).powf(self.alpha)).exp()
                } else {
                    linear_interp(&self.table_r, &self.table_eta, r)
                }
            }
            DeflectionMap::ShapeScaleFit => self.eta0 * (-(r / self.beta).powf(self.alpha)).exp(),
        }
    }

    /// Transmission relative to boresight; this is the fading factor that
    /// enters the channel composition.
    pub fn normalized_eta(&self, r: f64) -> f64 {
        (self.eta_of_deflection(r) / self.eta0).min(1.0)
    }

    /// Draws `n` Rayleigh deflections from the jitter substream.
    pub fn sample_deflections(&self, n: usize, seeds: &SeedTree) -> Vec<f64> {
        sample_deflections(self.sigma_r_m, n, seeds)
    }

    /// Fading distribution of the normalized jitter transmission.
    pub fn distribution(&self, n: usize, seeds: &SeedTree) -> Result<DiscreteDistribution> {
        let etas: Vec<f64> = self
            .sample_deflections(n, seeds)
            .into_iter()
            .map(|r| self.normalized_eta(r))
            .collect();
        let mut d = DiscreteDistribution::from_eta_samples(&etas, DEFAULT_STEP_DB)?;
        d.label = "jitter".to_string();
        Ok(d)
    }

    /// Writes the raw `r -> eta` lookup as CSV for audit.
    pub fn write_lookup_csv(&self, mut w: impl Write, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "r_m,eta")?;
        for (&r, &eta) in self.table_r.iter().zip(&self.table_eta) {
            writeln!(w, "{r:.6},{eta:.16e}")?;
        }
        Ok(())
    }
}

/// Draws `n` radial deflections with Rayleigh scale `sigma_r` (meters).
///
/// Each sample uses its own counter-derived substream, so any contiguous or
/// parallel evaluation order yields the same values.
pub fn sample_deflections(sigma_r: f64, n: usize, seeds: &SeedTree) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut rng = seeds.stream(streams::JITTER, i as u64);
            let u: f64 = rng.random();
            // Inverse CDF of the Rayleigh law; 1-u stays in (0, 1].
            sigma_r * (-2.0 * (1.0 - u).ln()).sqrt()
        })
        .collect()
}

/// Fraction of the power of a Gaussian beam (1/e^2 radius `w`, axis offset
/// `r`) collected by a circular aperture of radius `a` centered at the
/// origin, by Gauss-Legendre quadrature in polar coordinates.
fn overlap_efficiency(r: f64, w: f64, a: f64, order: usize) -> f64 {
    let radial = gauss_legendre(order);
    let angular = gauss_legendre(order);
    let norm = 2.0 / (std::f64::consts::PI * w * w);
    radial.integrate(0.0, a, |rho| {
        let ring = angular.integrate(0.0, 2.0 * std::f64::consts::PI, |phi| {
            let d2 = rho * rho - 2.0 * rho * r * phi.cos() + r * r;
            (-2.0 * d2 / (w * w)).exp()
        });
        norm * rho * ring
    })
}

/// Least-squares fit of `ln(-ln(eta/eta0)) = alpha ln r - alpha ln beta` over
/// the deflection range the Rayleigh law actually visits.
fn fit_shape_scale(rs: &[f64], etas: &[f64], eta0: f64, sigma_r: f64, spot: f64) -> (f64, f64) {
    let r_lo = 0.05 * sigma_r.max(0.05 * spot);
    let r_hi = (4.0 * sigma_r).max(0.5 * spot);
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut n = 0.0;
    for (&r, &eta) in rs.iter().zip(etas) {
        if r < r_lo || r > r_hi {
            continue;
        }
        let ratio = eta / eta0;
        if !(ratio > 0.0 && ratio < 1.0) {
            continue;
        }
        let x = r.ln();
        let y = (-ratio.ln()).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        n += 1.0;
    }
    if n < 2.0 {
        // Degenerate table (e.g. zero jitter with a huge spot); fall back to
        // the analytic small-aperture Gaussian map.
        return (2.0, spot / std::f64::consts::SQRT_2);
    }
    let alpha = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let ln_beta = -((sy - alpha * sx) / n) / alpha;
    (alpha, ln_beta.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Geometry-level reference numbers: 38608.9 km range, 41.9 m spot.
    fn reference_model(map: DeflectionMap) -> JitterModel {
        let g = LinkGeometry::geo_default();
        JitterModel::from_geometry(&g, 7e-8, map).unwrap()
    }

    #[test]
    fn zero_sigma_gives_zero_deflections() {
        let seeds = SeedTree::new(1);
        assert!(sample_deflections(0.0, 100, &seeds).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn deflection_mean_matches_rayleigh_moment() {
        let seeds = SeedTree::new(2);
        let sigma = 2.7026;
        let n = 100_000;
        let samples = sample_deflections(sigma, n, &seeds);
        let mean = samples.iter().sum::<f64>() / n as f64;
        let expect = sigma * (std::f64::consts::PI / 2.0).sqrt();
        // Three standard errors of the Rayleigh mean estimator.
        let se = sigma * ((4.0 - std::f64::consts::PI) / 2.0).sqrt() / (n as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean} vs {expect}");
    }

    #[test]
    fn deflection_cdf_matches_closed_form() {
        let seeds = SeedTree::new(3);
        let sigma = 2.7026;
        let n = 10_000;
        let mut samples = sample_deflections(sigma, n, &seeds);
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0_f64;
        for (i, &r) in samples.iter().enumerate() {
            let analytic = 1.0 - (-r * r / (2.0 * sigma * sigma)).exp();
            let hi = (i + 1) as f64 / n as f64;
            let lo = i as f64 / n as f64;
            ks = ks.max((analytic - hi).abs()).max((analytic - lo).abs());
        }
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_deflections(2.7, 50, &SeedTree::new(9));
        let b = sample_deflections(2.7, 50, &SeedTree::new(9));
        let c = sample_deflections(2.7, 50, &SeedTree::new(10));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn overlap_matches_small_aperture_closed_form() {
        // For an aperture much smaller than the spot the overlap is
        // 2 a^2 / w^2 * exp(-2 r^2 / w^2).
        let w = 10.0;
        let a = 0.05;
        for &r in &[0.0, 2.0, 7.0, 15.0] {
            let numeric = overlap_efficiency(r, w, a, 40);
            let analytic = 2.0 * a * a / (w * w) * (-2.0 * r * r / (w * w)).exp();
            assert_relative_eq!(numeric, analytic, max_relative = 1e-3);
        }
    }

    #[test]
    fn overlap_captures_everything_for_huge_aperture() {
        let v = overlap_efficiency(0.0, 1.0, 30.0, 60);
        assert_relative_eq!(v, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn overlap_quadrature_is_converged() {
        // Doubling the rule order must not move the reference-case values.
        let g = LinkGeometry::geo_default();
        let w = g.far_field_spot_radius_m();
        let a = g.sat_diameter_m / 2.0;
        for &r in &[0.0, 1.0, 2.7, 8.0, 16.0] {
            let coarse = overlap_efficiency(r, w, a, 40);
            let fine = overlap_efficiency(r, w, a, 80);
            assert_relative_eq!(coarse, fine, max_relative = 1e-10);
        }
    }

    #[test]
    fn map_is_monotone_and_anchored_at_eta0() {
        for map in [DeflectionMap::NumericOverlap, DeflectionMap::ShapeScaleFit] {
            let m = reference_model(map);
            assert_relative_eq!(m.eta_of_deflection(0.0), m.eta0(), max_relative = 1e-9);
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let r = i as f64 * 0.5;
                let eta = m.eta_of_deflection(r);
                assert!(eta <= prev + 1e-15, "map not monotone at r={r}");
                prev = eta;
            }
            // Far beyond the spot the transmission has collapsed.
            let far = m.eta_of_deflection(3.0 * m.beam_spot_radius_m);
            assert!(far < 1e-3 * m.eta0());
        }
    }

    #[test]
    fn fit_agrees_with_numeric_map_in_the_sampled_range() {
        let numeric = reference_model(DeflectionMap::NumericOverlap);
        let fitted = reference_model(DeflectionMap::ShapeScaleFit);
        let (alpha, _) = fitted.fit_params();
        // Small aperture relative to spot: the map is essentially Gaussian.
        assert_relative_eq!(alpha, 2.0, max_relative = 0.01);
        for i in 0..=60 {
            let r = 3.0 * numeric.sigma_r_m * i as f64 / 60.0;
            assert_relative_eq!(
                fitted.eta_of_deflection(r),
                numeric.eta_of_deflection(r),
                max_relative = 0.02
            );
        }
    }

    #[test]
    fn zero_jitter_distribution_is_point_mass_at_zero_db() {
        let m = JitterModel::new(0.0, 41.9, 0.25, DeflectionMap::NumericOverlap).unwrap();
        let d = m.distribution(1000, &SeedTree::new(4)).unwrap();
        let s = d.stats();
        assert_relative_eq!(s.mean_db, 0.0, epsilon = 1e-9);
        assert_relative_eq!(s.mean_eta, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn distribution_mean_matches_direct_sample_mean() {
        let m = reference_model(DeflectionMap::NumericOverlap);
        let seeds = SeedTree::new(5);
        let n = 20_000;
        let etas: Vec<f64> = m
            .sample_deflections(n, &seeds)
            .into_iter()
            .map(|r| m.normalized_eta(r))
            .collect();
        let direct = etas.iter().sum::<f64>() / n as f64;
        let d = m.distribution(n, &seeds).unwrap();
        assert!((d.mean_eta() - direct).abs() < 1e-3, "{} vs {direct}", d.mean_eta());
    }

    #[test]
    fn stronger_jitter_fades_harder() {
        let seeds = SeedTree::new(6);
        let weak = JitterModel::new(2.7, 41.9, 0.25, DeflectionMap::NumericOverlap).unwrap();
        let strong = JitterModel::new(5.4, 41.9, 0.25, DeflectionMap::NumericOverlap).unwrap();
        let mean_weak = weak.distribution(5000, &seeds).unwrap().mean_eta();
        let mean_strong = strong.distribution(5000, &seeds).unwrap().mean_eta();
        assert!(mean_weak > mean_strong);
    }

    #[test]
    fn lookup_csv_has_expected_shape() {
        let m = reference_model(DeflectionMap::NumericOverlap);
        let mut buf = Vec::new();
        m.write_lookup_csv(&mut buf, &["seed: 1".to_string()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# seed: 1");
        assert_eq!(lines.next().unwrap(), "r_m,eta");
        assert!(lines.next().unwrap().starts_with("0.000000,"));
    }
}
