//! Run configuration: parsing, validation, canonical hashing.
//!
//! A [`RunConfig`] is the single source of truth for a batch run. It is a
//! plain TOML tree with one section per pipeline stage; every field has a
//! default, so an empty file describes the reference link (1 m ground
//! aperture, MMSE pre-compensation, Table-style optimistic detectors,
//! twin-field scan). Configs round-trip losslessly through serialization,
//! and two canonical hashes derived from the JSON form stamp every output
//! artifact:
//!
//! * [`RunConfig::config_hash`] covers the whole configuration, and
//! * [`RunConfig::channel_hash`] covers only the channel-shaping subset
//!   (geometry, turbulence, jitter, fixed losses, seed), so a key-rate
//!   stage can detect that a PDTE file on disk was produced by a
//!   different channel than the one currently configured.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::LinkGeometry;
use crate::jitter::DeflectionMap;
use crate::math::log_spaced;
use crate::protocols::{BoundStrategy, Compensation, DetectorParams, MpParams, TfParams};
use crate::turbulence::covariance::CorrectionKind;
use crate::turbulence::zernike::corrected_mode_count;

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for every Monte Carlo stage.
    pub seed: u64,
    /// Directory receiving all output artifacts.
    pub output_dir: PathBuf,
    /// Link geometry.
    pub geometry: GeometrySection,
    /// Turbulence and adaptive-optics settings.
    pub turbulence: TurbulenceSection,
    /// Residual pointing jitter settings.
    pub jitter: JitterSection,
    /// Fixed (non-fading) loss terms.
    pub loss: LossSection,
    /// Detector scenario.
    pub detector: DetectorSection,
    /// Protocol selection and parameters.
    pub protocol: ProtocolSection,
    /// Scan grids for the optimizer.
    pub scan: ScanSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            output_dir: PathBuf::from("out"),
            geometry: GeometrySection::default(),
            turbulence: TurbulenceSection::default(),
            jitter: JitterSection::default(),
            loss: LossSection::default(),
            detector: DetectorSection::default(),
            protocol: ProtocolSection::default(),
            scan: ScanSection::default(),
        }
    }
}

/// Link geometry in config-friendly units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    /// Ground-station aperture diameter (m).
    pub aperture_m: f64,
    /// Satellite receiver aperture diameter (m).
    pub sat_diameter_m: f64,
    /// Operating wavelength (nm).
    pub wavelength_nm: f64,
    /// Satellite elevation above the horizon (degrees).
    pub elevation_deg: f64,
    /// Satellite altitude (m).
    pub sat_altitude_m: f64,
    /// Earth radius used in the slant-range computation (m).
    pub earth_radius_m: f64,
    /// Point-ahead angle between uplink and downlink (µrad).
    pub point_ahead_urad: f64,
    /// Residual static pointing misalignment (µrad).
    pub misalignment_urad: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = LinkGeometry::geo_default();
        GeometrySection {
            aperture_m: g.ogs_diameter_m,
            sat_diameter_m: g.sat_diameter_m,
            wavelength_nm: g.wavelength_m * 1e9,
            elevation_deg: g.elevation_rad.to_degrees(),
            sat_altitude_m: g.sat_altitude_m,
            earth_radius_m: g.earth_radius_m,
            point_ahead_urad: g.point_ahead_rad * 1e6,
            misalignment_urad: g.misalignment_rad * 1e6,
        }
    }
}

impl GeometrySection {
    /// The geometry in SI units.
    pub fn link_geometry(&self) -> LinkGeometry {
        LinkGeometry {
            ogs_diameter_m: self.aperture_m,
            sat_diameter_m: self.sat_diameter_m,
            wavelength_m: self.wavelength_nm * 1e-9,
            elevation_rad: self.elevation_deg.to_radians(),
            sat_altitude_m: self.sat_altitude_m,
            earth_radius_m: self.earth_radius_m,
            point_ahead_rad: self.point_ahead_urad * 1e-6,
            misalignment_rad: self.misalignment_urad * 1e-6,
        }
    }
}

/// Turbulence model and adaptive-optics correction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbulenceSection {
    /// Whether the turbulence stage contributes at all; `false` replaces
    /// its distribution with a lossless point mass.
    pub enabled: bool,
    /// Optional measured layer profile (`z_m,cn2,thickness_m` CSV). When
    /// absent a synthetic profile is calibrated to the targets below.
    pub profile_csv: Option<PathBuf>,
    /// Fried parameter target for the synthetic profile (m).
    pub r0_m: f64,
    /// Isoplanatic-angle target for the synthetic profile (µrad).
    pub theta0_urad: f64,
    /// Log-amplitude variance target for the synthetic profile.
    pub sigma_chi2: f64,
    /// Number of corrected Zernike modes; defaults to the aperture-derived
    /// count when absent.
    pub ao_modes: Option<usize>,
    /// Pre-compensation estimator.
    pub correction: CorrectionKind,
    /// Zernike evaluation grid resolution (points per axis).
    pub grid_resolution: usize,
    /// Monte Carlo draws for the coupling distribution.
    pub samples: usize,
}

impl Default for TurbulenceSection {
    fn default() -> Self {
        TurbulenceSection {
            enabled: true,
            profile_csv: None,
            r0_m: 0.25,
            theta0_urad: 8.51,
            sigma_chi2: 0.03,
            ao_modes: None,
            correction: CorrectionKind::Mmse,
            grid_resolution: 64,
            samples: 10_000,
        }
    }
}

impl TurbulenceSection {
    /// Corrected mode count: the override if present, otherwise the
    /// aperture-scaled default.
    pub fn effective_ao_modes(&self, aperture_m: f64) -> usize {
        self.ao_modes
            .unwrap_or_else(|| corrected_mode_count(aperture_m))
    }
}

/// Residual pointing jitter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSection {
    /// Whether the jitter stage contributes at all.
    pub enabled: bool,
    /// One-axis pointing jitter (µrad, one standard deviation).
    pub angle_urad: f64,
    /// Deflection-to-transmission map.
    pub map: DeflectionMap,
    /// Monte Carlo draws for the jitter distribution.
    pub samples: usize,
}

impl Default for JitterSection {
    fn default() -> Self {
        JitterSection {
            enabled: true,
            angle_urad: 0.07,
            map: DeflectionMap::NumericOverlap,
            samples: 8192,
        }
    }
}

/// Fixed, non-fading loss contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    /// System (optics, coupling) loss (dB).
    pub system_db: f64,
    /// Atmospheric absorption loss (dB).
    pub absorption_db: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            system_db: 2.8,
            absorption_db: 1.0,
        }
    }
}

/// Detector scenario: a named preset, optionally overridden field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    /// Preset name: `idealized`, `optimistic` or `pessimistic`.
    pub preset: String,
    /// Dark count rate override (Hz).
    pub dark_count_rate_hz: Option<f64>,
    /// Detection window override (s).
    pub detection_window_s: Option<f64>,
    /// Detection efficiency override.
    pub efficiency: Option<f64>,
    /// Dead time override (repetition periods).
    pub dead_time_rounds: Option<u32>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            preset: "optimistic".to_string(),
            dark_count_rate_hz: None,
            detection_window_s: None,
            efficiency: None,
            dead_time_rounds: None,
        }
    }
}

impl DetectorSection {
    /// Resolves preset plus overrides into concrete parameters.
    pub fn detector_params(&self) -> Result<DetectorParams> {
        let mut base = match self.preset.as_str() {
            "idealized" => DetectorParams::idealized(),
            "optimistic" => DetectorParams::optimistic(),
            "pessimistic" => DetectorParams::pessimistic(),
            other => {
                return Err(Error::config(format!(
                    "unknown detector preset '{other}' \
                     (expected idealized, optimistic or pessimistic)"
                )))
            }
        };
        if let Some(v) = self.dark_count_rate_hz {
            base.dark_count_rate_hz = v;
        }
        if let Some(v) = self.detection_window_s {
            base.detection_window_s = v;
        }
        if let Some(v) = self.efficiency {
            base.efficiency = v;
        }
        if let Some(v) = self.dead_time_rounds {
            base.dead_time_rounds = v;
        }
        base.validate()?;
        Ok(base)
    }
}

/// Which protocol a key-rate stage evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Twin-field (sending-or-not) protocol.
    Tf,
    /// Mode-pairing protocol.
    Mp,
}

impl ProtocolKind {
    /// Short lowercase name used in file names and console summaries.
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Tf => "tf",
            ProtocolKind::Mp => "mp",
        }
    }
}

/// Protocol selection plus per-protocol knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Which protocol the `keyrate` stage runs.
    pub kind: ProtocolKind,
    /// Source repetition rate (Hz), shared by both protocols.
    pub rep_rate_hz: f64,
    /// Twin-field knobs.
    pub tf: TfSection,
    /// Mode-pairing knobs.
    pub mp: MpSection,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            kind: ProtocolKind::Tf,
            rep_rate_hz: TfParams::default().rep_rate_hz,
            tf: TfSection::default(),
            mp: MpSection::default(),
        }
    }
}

/// Twin-field protocol knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfSection {
    /// Residual phase mismatch between the arms (rad).
    pub theta_rad: f64,
    /// Residual polarization mismatch between the arms (rad).
    pub phi_rad: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
    /// Minimum photon-number cutoff for truncated sums.
    pub photon_cutoff: usize,
    /// Z-basis sending probability.
    pub sending_prob: f64,
    /// Phase-error bound strategy.
    pub bound: BoundStrategy,
    /// Arm-asymmetry handling.
    pub compensation: Compensation,
}

impl Default for TfSection {
    fn default() -> Self {
        let p = TfParams::default();
        TfSection {
            theta_rad: p.theta,
            phi_rad: p.phi,
            f_ec: p.f_ec,
            photon_cutoff: p.photon_cutoff,
            sending_prob: p.sending_prob,
            bound: p.bound,
            compensation: p.compensation,
        }
    }
}

/// Mode-pairing protocol knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpSection {
    /// Minimum pairing gap (rounds).
    pub l_min: u32,
    /// Maximum pairing gap (rounds) when not scanned.
    pub l_max: u32,
    /// Whether `keyrate` additionally scans the maximum pairing gap and
    /// reports the joint optimum.
    pub optimize_lmax: bool,
    /// Free-space phase drift rate (rad/s, one standard deviation).
    pub sigma_fs: f64,
    /// Laser frequency jitter (Hz, one standard deviation).
    pub sigma_nu_hz: f64,
    /// Central frequency offset between the lasers (Hz).
    pub delta_nu_hz: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
    /// Intrinsic Z-pair distinguishability error.
    pub z_distinguishability: f64,
    /// Arm-asymmetry handling.
    pub compensation: Compensation,
}

impl Default for MpSection {
    fn default() -> Self {
        let p = MpParams::default();
        MpSection {
            l_min: p.l_min,
            l_max: p.l_max,
            optimize_lmax: true,
            sigma_fs: p.sigma_fs,
            sigma_nu_hz: p.sigma_nu_hz,
            delta_nu_hz: p.delta_nu_hz,
            f_ec: p.f_ec,
            z_distinguishability: p.z_distinguishability,
            compensation: p.compensation,
        }
    }
}

/// Optimizer grid settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    /// Smallest scanned intensity (photon/pulse).
    pub mu_min: f64,
    /// Largest scanned intensity (photon/pulse).
    pub mu_max: f64,
    /// Number of logarithmically spaced intensity points.
    pub mu_points: usize,
    /// Smallest scanned maximum pairing gap.
    pub lmax_min: u32,
    /// Largest scanned maximum pairing gap.
    pub lmax_max: u32,
    /// Number of logarithmically spaced pairing-gap points.
    pub lmax_points: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            mu_min: 1e-3,
            mu_max: 1.0,
            mu_points: 25,
            lmax_min: 1_000,
            lmax_max: 1_000_000,
            lmax_points: 15,
        }
    }
}

impl ScanSection {
    /// The intensity grid.
    pub fn mu_grid(&self) -> Vec<f64> {
        log_spaced(self.mu_min, self.mu_max, self.mu_points)
    }

    /// The pairing-gap grid: logarithmically spaced, rounded, deduplicated.
    pub fn lmax_grid(&self) -> Vec<u32> {
        let mut grid: Vec<u32> = log_spaced(
            self.lmax_min as f64,
            self.lmax_max as f64,
            self.lmax_points,
        )
        .into_iter()
        .map(|v| v.round() as u32)
        .collect();
        grid.dedup();
        grid
    }
}

/// The channel-shaping subset of a configuration; two runs with equal
/// [`ChannelKey`]s produce identical PDTE files.
#[derive(Serialize)]
struct ChannelKey<'a> {
    seed: u64,
    geometry: &'a GeometrySection,
    turbulence: &'a TurbulenceSection,
    jitter: &'a JitterSection,
    loss: &'a LossSection,
}

fn short_hash(value: &impl Serialize) -> String {
    let json = serde_json::to_vec(value).expect("config serialization cannot fail");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    /// Parses a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    /// Reads and parses a TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Serializes back to TOML (round-trips losslessly).
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialization failed: {e}")))
    }

    /// Sixteen hex characters identifying the full configuration.
    pub fn config_hash(&self) -> String {
        short_hash(self)
    }

    /// Sixteen hex characters identifying only the channel-shaping subset
    /// (geometry, turbulence, jitter, fixed loss, seed).
    pub fn channel_hash(&self) -> String {
        short_hash(&ChannelKey {
            seed: self.seed,
            geometry: &self.geometry,
            turbulence: &self.turbulence,
            jitter: &self.jitter,
            loss: &self.loss,
        })
    }

    /// Twin-field parameters assembled from the protocol and scan sections.
    pub fn tf_params(&self) -> TfParams {
        let s = &self.protocol.tf;
        TfParams {
            mu_grid: self.scan.mu_grid(),
            theta: s.theta_rad,
            phi: s.phi_rad,
            f_ec: s.f_ec,
            photon_cutoff: s.photon_cutoff,
            compensation: s.compensation,
            sending_prob: s.sending_prob,
            bound: s.bound,
            rep_rate_hz: self.protocol.rep_rate_hz,
        }
    }

    /// Mode-pairing parameters assembled from the protocol and scan
    /// sections.
    pub fn mp_params(&self) -> MpParams {
        let s = &self.protocol.mp;
        MpParams {
            mu_grid: self.scan.mu_grid(),
            l_min: s.l_min,
            l_max: s.l_max,
            rep_rate_hz: self.protocol.rep_rate_hz,
            sigma_fs: s.sigma_fs,
            sigma_nu_hz: s.sigma_nu_hz,
            delta_nu_hz: s.delta_nu_hz,
            f_ec: s.f_ec,
            compensation: s.compensation,
            z_distinguishability: s.z_distinguishability,
        }
    }

    /// Checks every section for consistency; referenced files must exist.
    pub fn validate(&self) -> Result<()> {
        self.geometry.link_geometry().validate()?;

        let t = &self.turbulence;
        if let Some(path) = &t.profile_csv {
            if !path.exists() {
                return Err(Error::config(format!(
                    "turbulence.profile_csv does not exist: {}",
                    path.display()
                )));
            }
        } else if !(t.r0_m > 0.0 && t.theta0_urad > 0.0 && t.sigma_chi2 >= 0.0) {
            return Err(Error::config(
                "synthetic profile targets require r0_m > 0, theta0_urad > 0, \
                 sigma_chi2 >= 0"
                    .to_string(),
            ));
        }
        if t.enabled && t.samples < 2 {
            return Err(Error::config(
                "turbulence.samples must be at least 2".to_string(),
            ));
        }
        if t.grid_resolution < 16 {
            return Err(Error::config(
                "turbulence.grid_resolution must be at least 16".to_string(),
            ));
        }
        if t.effective_ao_modes(self.geometry.aperture_m) < 1 {
            return Err(Error::config(
                "turbulence.ao_modes must be at least 1".to_string(),
            ));
        }

        let j = &self.jitter;
        if !(j.angle_urad >= 0.0) || !j.angle_urad.is_finite() {
            return Err(Error::config(
                "jitter.angle_urad must be finite and non-negative".to_string(),
            ));
        }
        if j.enabled && j.samples < 2 {
            return Err(Error::config(
                "jitter.samples must be at least 2".to_string(),
            ));
        }

        for (name, v) in [
            ("loss.system_db", self.loss.system_db),
            ("loss.absorption_db", self.loss.absorption_db),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }

        self.detector.detector_params()?;
        self.tf_params().validate()?;
        self.mp_params().validate()?;

        let s = &self.scan;
        if s.mu_points < 20 || s.mu_min > 1e-3 * 1.001 || s.mu_max < 0.999 {
            return Err(Error::config(format!(
                "scan grid must use at least 20 points spanning [1e-3, 1] \
                 photon/pulse, got {} points over [{:.3e}, {:.3e}]",
                s.mu_points, s.mu_min, s.mu_max
            )));
        }
        if s.lmax_points < 15 || s.lmax_min > 1_001 || s.lmax_max < 999_000 {
            return Err(Error::config(format!(
                "pairing-gap grid must use at least 15 points spanning \
                 [1e3, 1e6], got {} points over [{}, {}]",
                s.lmax_points, s.lmax_min, s.lmax_max
            )));
        }

        Ok(())
    }
}
