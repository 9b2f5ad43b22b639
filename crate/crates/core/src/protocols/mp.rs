//! Mode-pairing QKD with an untrusted relay.
//!
//! Both parties send pulses every round, choosing vacuum or a signal of
//! intensity μ at random; the relay announces which rounds clicked, and
//! the parties pair up clicked rounds after the fact. A pair is kept when
//! the gap between its rounds lies in `[l_min, l_max]`: the lower edge
//! models detector dead time, the upper edge limits how much laser phase
//! drift the pair accumulates.
//!
//! Everything is expressed per round of a lossy bosonic channel with
//! threshold detectors: `γ = μ·η_arm·η_D` is the mean photon number a
//! detector sees from one arm.

use super::{binary_entropy, Compensation, DetectorParams, KeyRatePoint};
use crate::error::{Error, Result};
use crate::math::bessel::bessel_i0;
use crate::math::{linear_interp, log_spaced};
use serde::{Deserialize, Serialize};

/// Mode-pairing protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    /// Signal intensities scanned by the optimizer (photon/pulse,
    /// ascending).
    pub mu_grid: Vec<f64>,
    /// Minimum pairing gap in rounds (detector dead time).
    pub l_min: u32,
    /// Maximum pairing gap in rounds (phase-drift budget).
    pub l_max: u32,
    /// Source repetition rate (Hz).
    pub rep_rate_hz: f64,
    /// Free-space contribution to the relative phase drift rate (rad/s).
    pub sigma_fs: f64,
    /// Frequency jitter of each laser (Hz, one standard deviation).
    pub sigma_nu_hz: f64,
    /// Residual frequency offset between the lasers (Hz).
    pub delta_nu_hz: f64,
    /// Error-correction inefficiency `f_EC ≥ 1`.
    pub f_ec: f64,
    /// How arm asymmetry is handled.
    pub compensation: Compensation,
    /// Probability that an interference-type pair decodes to the wrong
    /// bit (pulse distinguishability in the intensity basis).
    pub z_distinguishability: f64,
}

impl Default for MpParams {
    fn default() -> Self {
        MpParams {
            mu_grid: log_spaced(1e-3, 1.0, 25),
            l_min: 100,
            l_max: 184_206,
            rep_rate_hz: 2.5e9,
            sigma_fs: 150.0,
            sigma_nu_hz: 1e3,
            delta_nu_hz: 100.0,
            f_ec: 1.1,
            compensation: Compensation::NonCompensated,
            z_distinguishability: 0.001,
        }
    }
}

impl MpParams {
    /// Checks parameter ranges and grid ordering.
    pub fn validate(&self) -> Result<()> {
        if self.mu_grid.is_empty() {
            return Err(Error::config("mu_grid must not be empty".to_string()));
        }
        if self.mu_grid.windows(2).any(|w| !(w[1] > w[0])) || !(self.mu_grid[0] > 0.0) {
            return Err(Error::config(
                "mu_grid must be positive and strictly ascending".to_string(),
            ));
        }
        if self.l_min < 1 || self.l_max < self.l_min {
            return Err(Error::config(format!(
                "pairing gaps must satisfy 1 ≤ l_min ≤ l_max, got [{}, {}]",
                self.l_min, self.l_max
            )));
        }
        if !(self.rep_rate_hz > 0.0) {
            return Err(Error::config("repetition rate must be positive".to_string()));
        }
        for (name, v) in [
            ("sigma_fs", self.sigma_fs),
            ("sigma_nu_hz", self.sigma_nu_hz),
            ("delta_nu_hz", self.delta_nu_hz),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::config(format!(
                "error-correction inefficiency must be ≥ 1, got {}",
                self.f_ec
            )));
        }
        if !(self.z_distinguishability >= 0.0 && self.z_distinguishability <= 0.5) {
            return Err(Error::config(format!(
                "z_distinguishability must lie in [0, ½], got {}",
                self.z_distinguishability
            )));
        }
        Ok(())
    }
}

/// Click probabilities conditioned on who sent a signal pulse.
///
/// Index semantics: `c00` neither sent, `c01` only the second party, `c10`
/// only the first, `c11` both (relative phase averaged out). Each entry is
/// the probability that exactly one relay detector fires.
#[derive(Debug, Clone, Copy)]
struct ClickPatterns {
    c00: f64,
    c01: f64,
    c10: f64,
    c11: f64,
}

impl ClickPatterns {
    fn average(&self) -> f64 {
        0.25 * (self.c00 + self.c01 + self.c10 + self.c11)
    }
}

/// Patterns for phase-randomized coherent pulses with arriving intensities
/// `γ_A`, `γ_B` (detector efficiency folded in).
fn coherent_patterns(gamma_a: f64, gamma_b: f64, p_d: f64) -> ClickPatterns {
    let single = |gamma: f64| {
        let em = (-0.5 * gamma).exp_m1();
        2.0 * (1.0 - p_d) * (1.0 + em) * (-em + p_d * (1.0 + em))
    };
    let em = (-0.5 * (gamma_a + gamma_b)).exp_m1();
    let i0m1 = bessel_i0((gamma_a * gamma_b).sqrt()) - 1.0;
    let both = 2.0 * (1.0 - p_d) * (1.0 + em) * (i0m1 - em + p_d * (1.0 + em));
    ClickPatterns {
        c00: 2.0 * p_d * (1.0 - p_d),
        c01: single(gamma_b),
        c10: single(gamma_a),
        c11: both,
    }
}

/// Patterns when the senders emit single photons instead of coherent
/// pulses (`η` values are end-to-end detection probabilities for that
/// photon). Photons route independently at the balanced beamsplitter.
fn fock_patterns(eta_a: f64, eta_b: f64, p_d: f64) -> ClickPatterns {
    ClickPatterns {
        c00: 2.0 * p_d * (1.0 - p_d),
        c01: (1.0 - p_d) * (eta_b + 2.0 * p_d * (1.0 - eta_b)),
        c10: (1.0 - p_d) * (eta_a + 2.0 * p_d * (1.0 - eta_a)),
        c11: (1.0 - p_d)
            * (0.5 * eta_a * eta_b
                + (eta_a + eta_b - 2.0 * eta_a * eta_b)
                + 2.0 * p_d * (1.0 - eta_a) * (1.0 - eta_b)),
    }
}

fn check_point_inputs(mu: f64, eta_a: f64, eta_b: f64) -> Result<()> {
    for (name, v) in [("mu", mu), ("eta_a", eta_a), ("eta_b", eta_b)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::config(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }
    Ok(())
}

/// Per-round click probability seen by the relay: the average of the four
/// send patterns, each chosen with probability ¼.
pub fn mp_click_prob(mu: f64, eta_a: f64, eta_b: f64, det: &DetectorParams) -> Result<f64> {
    check_point_inputs(mu, eta_a, eta_b)?;
    det.validate()?;
    let p_d = det.dark_prob();
    let gamma_a = mu * eta_a * det.efficiency;
    let gamma_b = mu * eta_b * det.efficiency;
    Ok(coherent_patterns(gamma_a, gamma_b, p_d).average())
}

/// Pairs formed per round when clicks arrive independently with
/// probability `p` and a pair is kept only for gaps in `[l_min, l_max]`.
///
/// A clicked round is held until the next click; if the gap is admissible
/// the two rounds pair up, otherwise the newer click becomes the held one.
/// The resulting renewal process yields `r_p = p·Δ/(1+Δ)` with
/// `Δ = (1−p)^{l_min−1} − (1−p)^{l_max}`. Always in `[0, p/2]`,
/// non-decreasing in `l_max`; `p = 0` gives 0.
pub fn mp_pairing_rate(p: f64, l_min: u32, l_max: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!(
            "click probability must lie in [0, 1], got {p}"
        )));
    }
    if l_min < 1 || l_max < l_min {
        return Err(Error::config(format!(
            "pairing gaps must satisfy 1 ≤ l_min ≤ l_max, got [{l_min}, {l_max}]"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let q = 1.0 - p;
    let delta = q.powf(f64::from(l_min - 1)) - q.powf(f64::from(l_max));
    Ok(p * delta / (1.0 + delta))
}

/// Phase misalignment accumulated over a pairing gap of `gap` rounds.
///
/// The relative phase after a gap Δt is Gaussian with mean `2πΔν·Δt` and
/// variance `(σ_fs² + 8π²σ_ν²)·Δt²`; the misalignment is the expectation
/// of `sin²(phase/2)`.
#[derive(Debug, Clone, Copy)]
pub struct PhaseDriftModel {
    sigma_tot_sq: f64,
    delta_nu_hz: f64,
    rep_rate_hz: f64,
}

impl PhaseDriftModel {
    pub fn new(sigma_fs: f64, sigma_nu_hz: f64, delta_nu_hz: f64, rep_rate_hz: f64) -> Self {
        let two_pi = std::f64::consts::TAU;
        PhaseDriftModel {
            sigma_tot_sq: sigma_fs * sigma_fs + 2.0 * two_pi * two_pi * sigma_nu_hz * sigma_nu_hz,
            delta_nu_hz,
            rep_rate_hz,
        }
    }

    pub fn from_params(params: &MpParams) -> Self {
        Self::new(
            params.sigma_fs,
            params.sigma_nu_hz,
            params.delta_nu_hz,
            params.rep_rate_hz,
        )
    }

    /// Expected `sin²` misalignment after `gap` rounds.
    pub fn misalignment(&self, gap: f64) -> f64 {
        let dt = gap / self.rep_rate_hz;
        let envelope = (-0.5 * self.sigma_tot_sq * dt * dt).exp();
        let mean = std::f64::consts::TAU * self.delta_nu_hz * dt;
        0.5 - 0.5 * envelope * mean.cos()
    }
}

/// Gap-averaged phase misalignment for click probability `p`.
///
/// The gap distribution is the geometric law truncated at `l_max`
/// (`P(L=n) = p(1−p)^{n−1}/(1−(1−p)^{l_max})`), summed from `l_min`; gaps
/// below `l_min` never form pairs and contribute nothing, so the weights
/// sum to slightly less than one.
pub fn mp_phase_misalignment(p: f64, params: &MpParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!(
            "click probability must lie in [0, 1], got {p}"
        )));
    }
    params.validate()?;
    let drift = PhaseDriftModel::from_params(params);
    Ok(blocked_gap_average(p, params.l_min, params.l_max, &drift))
}

/// Mass of the truncated geometric law on the integer range `[a, b]`.
struct GapWeights {
    /// `ln(1−p)`; `None` encodes the uniform `p → 0` limit.
    ln_q: Option<f64>,
    /// Normalization `1 − (1−p)^{l_max}` (or `l_max` in the limit).
    norm: f64,
}

impl GapWeights {
    fn new(p: f64, l_max: u32) -> Self {
        if p == 0.0 {
            GapWeights { ln_q: None, norm: f64::from(l_max) }
        } else {
            let ln_q = (-p).ln_1p();
            GapWeights { ln_q: Some(ln_q), norm: -(f64::from(l_max) * ln_q).exp_m1() }
        }
    }

    fn mass(&self, a: u32, b: u32) -> f64 {
        match self.ln_q {
            // (q^{a−1} − q^{b}) / (1 − q^{l_max}), assembled stably.
            Some(ln_q) => {
                let width = f64::from(b - a + 1);
                -((f64::from(a - 1) * ln_q).exp() * (width * ln_q).exp_m1()) / self.norm
            }
            None => f64::from(b - a + 1) / self.norm,
        }
    }
}

/// Evaluates the gap-averaged misalignment with a direct head sum plus
/// geometrically growing blocks, each block represented at its geometric
/// mean. Block widths are capped at a small fraction of the beat period
/// `F/Δν` so the cosine never varies much within a block.
fn blocked_gap_average(p: f64, l_min: u32, l_max: u32, drift: &PhaseDriftModel) -> f64 {
    const HEAD: u32 = 1024;
    const BLOCKS: usize = 512;
    let weights = GapWeights::new(p, l_max);
    let mut total = 0.0;

    let head_end = l_max.min(l_min.saturating_add(HEAD - 1));
    for n in l_min..=head_end {
        total += weights.mass(n, n) * drift.misalignment(f64::from(n));
    }
    if head_end == l_max {
        return total;
    }

    let width_cap = if drift.delta_nu_hz > 0.0 {
        (drift.rep_rate_hz / (32.0 * drift.delta_nu_hz)).max(1.0)
    } else {
        f64::INFINITY
    };
    let start = f64::from(head_end + 1);
    let end = f64::from(l_max);
    let ratio = (end / start).powf(1.0 / BLOCKS as f64);
    let mut a = head_end + 1;
    let mut edge = start;
    while a <= l_max {
        edge = (edge * ratio).min(end);
        let mut b = (edge.floor() as u32).clamp(a, l_max);
        let width = f64::from(b - a + 1);
        if width > width_cap {
            b = a + (width_cap as u32) - 1;
        }
        let rep = (f64::from(a) * f64::from(b)).sqrt();
        total += weights.mass(a, b) * drift.misalignment(rep);
        if b == l_max {
            break;
        }
        a = b + 1;
    }
    total
}

/// Precomputed misalignment as a function of click probability, for reuse
/// across many channel realizations with the same pairing window.
///
/// Values are tabulated on a log grid of `p` and interpolated linearly in
/// `ln p`; out-of-range probabilities clamp to the nearest endpoint (the
/// curve is flat in the small-`p` limit).
#[derive(Debug, Clone)]
pub struct MisalignmentTable {
    ln_p: Vec<f64>,
    e_d: Vec<f64>,
}

impl MisalignmentTable {
    const P_LO: f64 = 1e-12;
    const POINTS_PER_DECADE: usize = 512;

    pub fn new(params: &MpParams) -> Result<Self> {
        params.validate()?;
        let drift = PhaseDriftModel::from_params(params);
        let decades = -Self::P_LO.log10();
        let n = (decades * Self::POINTS_PER_DECADE as f64).round() as usize + 1;
        let ps = log_spaced(Self::P_LO, 1.0, n);
        let e_d = ps
            .iter()
            .map(|&p| blocked_gap_average(p, params.l_min, params.l_max, &drift))
            .collect();
        Ok(MisalignmentTable { ln_p: ps.into_iter().map(f64::ln).collect(), e_d })
    }

    pub fn lookup(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.e_d[0];
        }
        linear_interp(&self.ln_p, &self.e_d, p.ln())
    }
}

/// Evaluates the mode-pairing secret key rate at one operating point,
/// computing the gap-averaged misalignment exactly.
///
/// `eta_a`/`eta_b` are arm transmittances excluding detection efficiency.
/// The returned point carries `e_x` = single-photon phase error, `e_z` =
/// intensity-basis bit error, and auxiliaries `gain` (= r_p·r_s), `r_p`,
/// `r_s`, `q_11`, `y_11`, `e_d` and `p_click`.
pub fn mp_point(
    mu: f64,
    eta_a: f64,
    eta_b: f64,
    det: &DetectorParams,
    params: &MpParams,
) -> Result<KeyRatePoint> {
    check_point_inputs(mu, eta_a, eta_b)?;
    det.validate()?;
    params.validate()?;
    let drift = PhaseDriftModel::from_params(params);
    mp_point_impl(mu, eta_a, eta_b, det, params, &|p| {
        blocked_gap_average(p, params.l_min, params.l_max, &drift)
    })
}

/// Same as [`mp_point`] but reads the gap-averaged misalignment from a
/// precomputed table; use when evaluating many channel realizations.
pub fn mp_point_with_table(
    mu: f64,
    eta_a: f64,
    eta_b: f64,
    det: &DetectorParams,
    params: &MpParams,
    table: &MisalignmentTable,
) -> Result<KeyRatePoint> {
    check_point_inputs(mu, eta_a, eta_b)?;
    det.validate()?;
    params.validate()?;
    mp_point_impl(mu, eta_a, eta_b, det, params, &|p| table.lookup(p))
}

fn mp_point_impl(
    mu: f64,
    eta_a: f64,
    eta_b: f64,
    det: &DetectorParams,
    params: &MpParams,
    misalignment: &dyn Fn(f64) -> f64,
) -> Result<KeyRatePoint> {
    let (ea, eb) = params.compensation.apply(eta_a, eta_b);
    let eta_det_a = ea * det.efficiency;
    let eta_det_b = eb * det.efficiency;
    let gamma_a = mu * eta_det_a;
    let gamma_b = mu * eta_det_b;
    let p_d = det.dark_prob();

    let clicks = coherent_patterns(gamma_a, gamma_b, p_d);
    let p_click = clicks.average();
    let pair_products = clicks.c00 * clicks.c11 + clicks.c01 * clicks.c10;
    if p_click <= 0.0 || pair_products <= 0.0 {
        return Ok(KeyRatePoint::zero(mu));
    }

    let r_p = mp_pairing_rate(p_click.min(1.0), params.l_min, params.l_max)?;
    let r_s = pair_products / (8.0 * p_click * p_click);
    let e_d = misalignment(p_click.min(1.0));

    // Fraction of kept pairs in which each party emitted exactly one
    // photon, and the corresponding single-photon yield and phase error.
    let fock = fock_patterns(eta_det_a, eta_det_b, p_d);
    let p_one = mu * (-mu).exp();
    let q_11 = p_one * p_one * (fock.c00 * fock.c11 + fock.c01 * fock.c10) / pair_products;
    let y_11 = (1.0 - p_d)
        * (1.0 - p_d)
        * (0.5 * eta_det_a * eta_det_b
            + (2.0 * eta_det_a + 2.0 * eta_det_b - 3.0 * eta_det_a * eta_det_b) * p_d
            + 4.0 * (1.0 - eta_det_a) * (1.0 - eta_det_b) * p_d * p_d);
    let e_11 = if y_11 > 0.0 {
        let signal = (0.5 - e_d) * (1.0 - p_d * p_d) * 0.5 * eta_det_a * eta_det_b;
        (0.5 - signal / y_11).clamp(0.0, 0.5)
    } else {
        0.5
    };

    // Bit error of the intensity basis: accidental pairs (a dark click
    // against a both-sent click) decode randomly; interference pairs err
    // with the distinguishability probability.
    let e_z = (0.5 * clicks.c00 * clicks.c11
        + params.z_distinguishability * clicks.c01 * clicks.c10)
        / pair_products;

    let bracket =
        q_11 * (1.0 - binary_entropy(e_11)) - params.f_ec * binary_entropy(e_z.min(0.5));
    let rate = r_p * r_s * bracket;

    Ok(KeyRatePoint::new(
        mu,
        rate,
        params.rep_rate_hz,
        e_11,
        e_z,
        &[
            ("gain", r_p * r_s),
            ("r_p", r_p),
            ("r_s", r_s),
            ("q_11", q_11),
            ("y_11", y_11),
            ("e_d", e_d),
            ("p_click", p_click),
        ],
    ))
}
