//! Secret-key-rate engines for QKD through an untrusted middle node.
//!
//! Two measurement-device-independent protocols are implemented, both built
//! on single-photon interference at a relay ("Charlie") between the two
//! ground stations' uplinks:
//!
//! * [`tf`] — sending-or-not-sending twin-field QKD, where the key is
//!   carried by the phase of dim coherent pulses and security rests on a
//!   photon-number phase-error bound;
//! * [`mp`] — mode-pairing QKD, where clicks from individual rounds are
//!   paired in post-processing, removing the need for optical phase
//!   locking at the cost of a pairing-rate factor.
//!
//! Shared pieces live in this module: threshold-detector parameters with
//! the three study scenarios, the binary entropy function, the policy for
//! handling arm asymmetry at the relay, and the common result record
//! [`KeyRatePoint`]. Averaging a point evaluation over fading-channel
//! distributions is in [`average`].

pub mod average;
pub mod mp;
pub mod tf;

pub use average::average_over_pdte;
pub use mp::{
    mp_click_prob, mp_pairing_rate, mp_phase_misalignment, mp_point, mp_point_with_table,
    MisalignmentTable, MpParams,
};
pub use tf::{tf_point, BoundStrategy, TfParams};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Binary entropy in bits: `H(x) = −x·log₂x − (1−x)·log₂(1−x)`.
///
/// Returns 0 at both endpoints (and for out-of-range arguments produced by
/// round-off, which callers clamp away).
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -(x * x.log2()) - (1.0 - x) * (1.0 - x).log2()
}

/// Probability of at least one dark count in one detection window.
///
/// The rates and windows in play put `rate·window` around 10⁻⁸, where the
/// exact `1 − exp(−rate·window)` is indistinguishable from the product.
pub fn dark_prob(rate_hz: f64, window_s: f64) -> f64 {
    rate_hz * window_s
}

/// Threshold single-photon detector model at the relay.
///
/// Both of the relay's detectors are assumed identical. The detection
/// efficiency is folded into the arm transmittance by the protocol
/// evaluations; the dead time is expressed in repetition periods and feeds
/// the minimal pairing distance of the mode-pairing protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Dark count rate of each detector (Hz).
    pub dark_count_rate_hz: f64,
    /// Effective detection window per round (s).
    pub detection_window_s: f64,
    /// Detection efficiency η_D ∈ (0, 1].
    pub efficiency: f64,
    /// Dead time in repetition periods (lower bound on the pairing length).
    pub dead_time_rounds: u32,
}

impl DetectorParams {
    /// Validated constructor.
    pub fn new(
        dark_count_rate_hz: f64,
        detection_window_s: f64,
        efficiency: f64,
        dead_time_rounds: u32,
    ) -> Result<Self> {
        let d = DetectorParams {
            dark_count_rate_hz,
            detection_window_s,
            efficiency,
            dead_time_rounds,
        };
        d.validate()?;
        Ok(d)
    }

    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.dark_count_rate_hz >= 0.0) || !self.dark_count_rate_hz.is_finite() {
            return Err(Error::config(format!(
                "dark count rate must be finite and non-negative, got {}",
                self.dark_count_rate_hz
            )));
        }
        if !(self.detection_window_s >= 0.0) || !self.detection_window_s.is_finite() {
            return Err(Error::config(format!(
                "detection window must be finite and non-negative, got {}",
                self.detection_window_s
            )));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::config(format!(
                "detection efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        if self.dead_time_rounds < 1 {
            return Err(Error::config(
                "dead time must cover at least one round".to_string(),
            ));
        }
        Ok(())
    }

    /// Dark count probability per detection window, `p_d`.
    pub fn dark_prob(&self) -> f64 {
        dark_prob(self.dark_count_rate_hz, self.detection_window_s)
    }

    /// Optimistic space detector: 25 Hz dark rate in a 400 ps window
    /// (p_d = 10⁻⁸) at 70% efficiency.
    pub fn optimistic() -> Self {
        DetectorParams {
            dark_count_rate_hz: 25.0,
            detection_window_s: 400e-12,
            efficiency: 0.70,
            dead_time_rounds: 100,
        }
    }

    /// Pessimistic space detector, matching demonstrated space-qualified
    /// hardware: 100 Hz dark rate (p_d = 4×10⁻⁸) at 50% efficiency.
    pub fn pessimistic() -> Self {
        DetectorParams {
            dark_count_rate_hz: 100.0,
            detection_window_s: 400e-12,
            efficiency: 0.50,
            dead_time_rounds: 100,
        }
    }

    /// Idealized detector: state-of-the-art commercial ground hardware
    /// operated in space, 1 Hz dark rate (p_d = 4×10⁻¹⁰) at 90% efficiency.
    pub fn idealized() -> Self {
        DetectorParams {
            dark_count_rate_hz: 1.0,
            detection_window_s: 400e-12,
            efficiency: 0.90,
            dead_time_rounds: 100,
        }
    }
}

/// How an asymmetry between the two arms is handled at the relay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Compensation {
    /// The relay attenuates the stronger arm until both arrive with the
    /// weaker arm's transmittance, restoring symmetric interference.
    Compensated,
    /// Each arm keeps its own transmittance.
    NonCompensated,
}

impl Compensation {
    /// The effective pair of arm transmittances under this policy.
    pub fn apply(self, eta_a: f64, eta_b: f64) -> (f64, f64) {
        match self {
            Compensation::Compensated => {
                let m = eta_a.min(eta_b);
                (m, m)
            }
            Compensation::NonCompensated => (eta_a, eta_b),
        }
    }
}

/// One evaluated operating point of a protocol.
///
/// `e_x` is the X-basis (interference-basis) error and `e_z` the Z-basis
/// error; which of the two is the bit error and which the phase error
/// depends on the protocol (twin-field keys from X clicks, mode pairing
/// from Z pairs). Secondary quantities — gains, pairing ratios, error
/// components — ride along in `aux` under short stable names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRatePoint {
    /// Mean photon number of the signal pulses at this point.
    pub mu: f64,
    /// Secret bits per clock cycle; negative brackets clamp to zero.
    pub rate_per_pulse: f64,
    /// Secret bits per second at the configured repetition rate.
    pub rate_bps: f64,
    /// X-basis error rate, clamped into [0, ½] for reporting.
    pub e_x: f64,
    /// Z-basis error rate, clamped into [0, ½] for reporting.
    pub e_z: f64,
    /// Diagnostic quantities keyed by short stable names.
    pub aux: BTreeMap<String, f64>,
}

impl KeyRatePoint {
    /// Assembles a point, clamping the rate at zero and the reported
    /// errors into [0, ½].
    pub fn new(
        mu: f64,
        rate_per_pulse: f64,
        rep_rate_hz: f64,
        e_x: f64,
        e_z: f64,
        aux: &[(&str, f64)],
    ) -> Self {
        let rate = rate_per_pulse.max(0.0);
        KeyRatePoint {
            mu,
            rate_per_pulse: rate,
            rate_bps: rate * rep_rate_hz,
            e_x: e_x.clamp(0.0, 0.5),
            e_z: e_z.clamp(0.0, 0.5),
            aux: aux.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    /// A zero-rate point (no clicks, no key).
    pub fn zero(mu: f64) -> Self {
        KeyRatePoint {
            mu,
            rate_per_pulse: 0.0,
            rate_bps: 0.0,
            e_x: 0.0,
            e_z: 0.0,
            aux: BTreeMap::new(),
        }
    }

    /// Looks up an auxiliary value, defaulting to zero.
    pub fn aux_or_zero(&self, key: &str) -> f64 {
        self.aux.get(key).copied().unwrap_or(0.0)
    }
}

/// Poisson probabilities `w_n = e^{−μ} μⁿ/n!` for `n = 0..=cutoff`.
///
/// The cutoff starts at `min_cutoff` and grows until the tail mass drops
/// below `tail_rel`, so truncated photon-number sums carry a certified
/// remainder. Returns the weights and the final tail mass.
pub(crate) fn poisson_weights(mu: f64, min_cutoff: usize, tail_rel: f64) -> (Vec<f64>, f64) {
    const HARD_CAP: usize = 256;
    let mut w = Vec::with_capacity(min_cutoff + 1);
    let mut wn = (-mu).exp();
    let mut total = 0.0;
    let mut n = 0usize;
    loop {
        w.push(wn);
        total += wn;
        let tail = (1.0 - total).max(0.0);
        if n >= min_cutoff && (tail < tail_rel || n >= HARD_CAP) {
            return (w, tail);
        }
        n += 1;
        wn *= mu / n as f64;
    }
}
