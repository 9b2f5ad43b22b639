//! Averaging a key-rate model over fading-channel statistics.
//!
//! An uplink realizes a random transmittance per pairing block; the
//! long-run key rate is the expectation of the instantaneous rate over
//! the two arms' attenuation histograms. Rates add linearly with
//! probability mass; error rates are averaged weighted by each
//! realization's detection gain (the `gain` auxiliary reported by the
//! point evaluators), matching how errors accumulate in the sifted data.

use super::{Compensation, KeyRatePoint};
use crate::channel::{db_to_eta, DiscreteDistribution};
use crate::error::Result;
use crate::rng::pairwise_sum;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

/// Work items grouped so that the reduction order is fixed regardless of
/// how rayon schedules them.
const COMPENSATED_CHUNK: usize = 64;

/// Sums accumulated over one deterministic group of (mass, η_a, η_b)
/// evaluations.
#[derive(Default)]
struct Partial {
    rate: f64,
    rate_bps: f64,
    gain: f64,
    e_x_weighted: f64,
    e_z_weighted: f64,
    aux_weighted: BTreeMap<String, f64>,
    mu: Option<f64>,
}

fn accumulate<F>(jobs: &[(f64, f64, f64)], point_fn: &F) -> Result<Partial>
where
    F: Fn(f64, f64) -> Result<KeyRatePoint>,
{
    let mut part = Partial::default();
    for &(mass, eta_a, eta_b) in jobs {
        let pt = point_fn(eta_a, eta_b)?;
        let gain = pt.aux_or_zero("gain");
        part.rate += mass * pt.rate_per_pulse;
        part.rate_bps += mass * pt.rate_bps;
        part.gain += mass * gain;
        part.e_x_weighted += mass * gain * pt.e_x;
        part.e_z_weighted += mass * gain * pt.e_z;
        for (key, &value) in &pt.aux {
            if key != "gain" {
                *part.aux_weighted.entry(key.clone()).or_insert(0.0) += mass * gain * value;
            }
        }
        part.mu.get_or_insert(pt.mu);
    }
    Ok(part)
}

/// Combines per-group partials into one averaged point. Each column is
/// reduced with a pairwise tree over the fixed group order, so the result
/// is bit-identical for any thread count.
fn finalize(partials: Vec<Partial>) -> KeyRatePoint {
    let column = |f: &dyn Fn(&Partial) -> f64| {
        let values: Vec<f64> = partials.iter().map(f).collect();
        pairwise_sum(&values)
    };
    let rate = column(&|p| p.rate);
    let rate_bps = column(&|p| p.rate_bps);
    let gain = column(&|p| p.gain);
    let e_x_weighted = column(&|p| p.e_x_weighted);
    let e_z_weighted = column(&|p| p.e_z_weighted);
    let keys: BTreeSet<&String> = partials.iter().flat_map(|p| p.aux_weighted.keys()).collect();
    let mut aux = BTreeMap::new();
    for key in keys {
        let sum = column(&|p| p.aux_weighted.get(key).copied().unwrap_or(0.0));
        aux.insert(key.clone(), if gain > 0.0 { sum / gain } else { 0.0 });
    }
    aux.insert("gain".to_string(), gain);
    let mu = partials.iter().find_map(|p| p.mu).unwrap_or(0.0);
    KeyRatePoint {
        mu,
        rate_per_pulse: rate.max(0.0),
        rate_bps: rate_bps.max(0.0),
        e_x: if gain > 0.0 { (e_x_weighted / gain).clamp(0.0, 0.5) } else { 0.0 },
        e_z: if gain > 0.0 { (e_z_weighted / gain).clamp(0.0, 0.5) } else { 0.0 },
        aux,
    }
}

/// Averages a key-rate evaluator over the attenuation statistics of the
/// two arms.
///
/// `point_fn(eta_a, eta_b)` evaluates the instantaneous rate at fixed arm
/// transmittances (detector efficiency handled inside the evaluator).
/// Under [`Compensation::Compensated`] the relay pads the stronger arm to
/// match the weaker, so only the per-block maximum attenuation matters
/// and the average runs over that single distribution; otherwise every
/// pair of bins is evaluated. Mass beyond the grid edge counts as zero
/// transmittance and contributes no key.
pub fn average_over_pdte<F>(
    point_fn: F,
    pdte_a: &DiscreteDistribution,
    pdte_b: &DiscreteDistribution,
    compensation: Compensation,
) -> Result<KeyRatePoint>
where
    F: Fn(f64, f64) -> Result<KeyRatePoint> + Sync,
{
    pdte_a.validate()?;
    pdte_b.validate()?;
    let partials: Result<Vec<Partial>> = match compensation {
        Compensation::Compensated => {
            let worst = pdte_a.max_attenuation(pdte_b)?;
            let jobs: Vec<(f64, f64, f64)> = worst
                .mass()
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > 0.0)
                .map(|(i, &m)| {
                    let eta = db_to_eta(worst.value_db(i));
                    (m, eta, eta)
                })
                .collect();
            jobs.par_chunks(COMPENSATED_CHUNK)
                .map(|chunk| accumulate(chunk, &point_fn))
                .collect()
        }
        Compensation::NonCompensated => {
            let rows: Vec<(f64, f64)> = pdte_a
                .mass()
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > 0.0)
                .map(|(i, &m)| (m, db_to_eta(pdte_a.value_db(i))))
                .collect();
            let cols: Vec<(f64, f64)> = pdte_b
                .mass()
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > 0.0)
                .map(|(j, &m)| (m, db_to_eta(pdte_b.value_db(j))))
                .collect();
            rows.par_iter()
                .map(|&(m_a, eta_a)| {
                    let jobs: Vec<(f64, f64, f64)> = cols
                        .iter()
                        .map(|&(m_b, eta_b)| (m_a * m_b, eta_a, eta_b))
                        .collect();
                    accumulate(&jobs, &point_fn)
                })
                .collect()
        }
    };
    Ok(finalize(partials?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::tf::{tf_point, TfParams};
    use crate::protocols::DetectorParams;
    use approx::assert_relative_eq;

    fn detector() -> DetectorParams {
        DetectorParams::new(25.0, 400e-12, 0.7, 100).unwrap()
    }

    fn synthetic_point(eta_a: f64, eta_b: f64) -> Result<KeyRatePoint> {
        // Rate marker = η_a, error marker = η_a, gain = η_a·η_b.
        Ok(KeyRatePoint::new(
            0.5,
            eta_a,
            1.0,
            eta_a.min(0.5),
            0.25,
            &[("gain", eta_a * eta_b), ("extra", eta_b)],
        ))
    }

    #[test]
    fn point_masses_reduce_to_a_single_evaluation() {
        let a = DiscreteDistribution::point_mass(30.0);
        let b = DiscreteDistribution::point_mass(35.0);
        let params = TfParams::default();
        let det = detector();
        let avg = average_over_pdte(
            |ea, eb| tf_point(0.05, 0.05, ea, eb, &det, &params),
            &a,
            &b,
            Compensation::NonCompensated,
        )
        .unwrap();
        let direct = tf_point(0.05, 0.05, db_to_eta(30.0), db_to_eta(35.0), &det, &params).unwrap();
        assert_relative_eq!(avg.rate_per_pulse, direct.rate_per_pulse, max_relative = 1e-14);
        assert_relative_eq!(avg.e_x, direct.e_x, max_relative = 1e-12);
        assert_relative_eq!(avg.e_z, direct.e_z, max_relative = 1e-12);

        // Compensated: both arms see the worse attenuation.
        let avg = average_over_pdte(
            |ea, eb| tf_point(0.05, 0.05, ea, eb, &det, &params),
            &a,
            &b,
            Compensation::Compensated,
        )
        .unwrap();
        let eta = db_to_eta(35.0);
        let direct = tf_point(0.05, 0.05, eta, eta, &det, &params).unwrap();
        assert_relative_eq!(avg.rate_per_pulse, direct.rate_per_pulse, max_relative = 1e-14);
    }

    #[test]
    fn two_bin_average_matches_exhaustive_oracle() {
        let a = DiscreteDistribution::from_parts(30.0, 0.5, vec![0.4, 0.6], 0.0).unwrap();
        let b = DiscreteDistribution::from_parts(32.0, 0.5, vec![0.3, 0.7], 0.0).unwrap();
        let avg = average_over_pdte(synthetic_point, &a, &b, Compensation::NonCompensated).unwrap();

        let mut rate = 0.0;
        let mut gain = 0.0;
        let mut ex_w = 0.0;
        let mut extra_w = 0.0;
        for (ma, da) in [(0.4, 30.0), (0.6, 30.5)] {
            for (mb, db) in [(0.3, 32.0), (0.7, 32.5)] {
                let (ea, eb) = (db_to_eta(da), db_to_eta(db));
                let pt = synthetic_point(ea, eb).unwrap();
                let g = pt.aux_or_zero("gain");
                rate += ma * mb * pt.rate_per_pulse;
                gain += ma * mb * g;
                ex_w += ma * mb * g * pt.e_x;
                extra_w += ma * mb * g * pt.aux_or_zero("extra");
            }
        }
        assert_relative_eq!(avg.rate_per_pulse, rate, max_relative = 1e-14);
        assert_relative_eq!(avg.aux_or_zero("gain"), gain, max_relative = 1e-14);
        assert_relative_eq!(avg.e_x, ex_w / gain, max_relative = 1e-14);
        assert_relative_eq!(avg.aux_or_zero("extra"), extra_w / gain, max_relative = 1e-14);
        assert_eq!(avg.mu, 0.5);
    }

    #[test]
    fn lost_mass_contributes_no_key_but_keeps_normalization() {
        let a = DiscreteDistribution::from_parts(30.0, 0.5, vec![0.5], 0.5).unwrap();
        let b = DiscreteDistribution::point_mass(30.0);
        let avg = average_over_pdte(synthetic_point, &a, &b, Compensation::NonCompensated).unwrap();
        let eta = db_to_eta(30.0);
        // Only half the mass carries signal.
        assert_relative_eq!(avg.rate_per_pulse, 0.5 * eta, max_relative = 1e-14);
        // Errors are gain-weighted over the surviving bins only.
        assert_relative_eq!(avg.e_x, eta.min(0.5), max_relative = 1e-14);
    }

    #[test]
    fn compensated_identical_point_masses_match_noncompensated() {
        let a = DiscreteDistribution::point_mass(40.0);
        let b = DiscreteDistribution::point_mass(40.0);
        let params = TfParams::default();
        let det = detector();
        let f = |ea: f64, eb: f64| tf_point(0.05, 0.05, ea, eb, &det, &params);
        let comp = average_over_pdte(f, &a, &b, Compensation::Compensated).unwrap();
        let non = average_over_pdte(f, &a, &b, Compensation::NonCompensated).unwrap();
        assert_relative_eq!(comp.rate_per_pulse, non.rate_per_pulse, max_relative = 1e-14);
    }

    #[test]
    fn grid_mismatch_is_a_parameter_error() {
        let a = DiscreteDistribution::from_parts(30.0, 0.1, vec![1.0], 0.0).unwrap();
        let b = DiscreteDistribution::from_parts(30.0, 0.2, vec![1.0], 0.0).unwrap();
        let err = average_over_pdte(synthetic_point, &a, &b, Compensation::Compensated);
        assert!(err.is_err());
    }

    #[test]
    fn zero_gain_bins_do_not_skew_error_rates() {
        // One bin has gain zero (η_b = 0 there): its error marker must not
        // enter the weighted average.
        let a = DiscreteDistribution::point_mass(10.0);
        let b = DiscreteDistribution::from_parts(0.0, 160.0, vec![0.5, 0.5], 0.0).unwrap();
        let avg = average_over_pdte(
            |ea, eb| synthetic_point(ea, if eb < 1e-10 { 0.0 } else { eb }),
            &a,
            &b,
            Compensation::NonCompensated,
        )
        .unwrap();
        assert_relative_eq!(avg.e_x, db_to_eta(10.0), max_relative = 1e-12);
    }

    #[test]
    fn result_is_bit_identical_across_thread_counts() {
        // A moderately sized grid exercised under different rayon pools
        // must produce the same bytes.
        let masses: Vec<f64> = (0..48).map(|i| 1.0 + ((i * 37) % 11) as f64).collect();
        let a = DiscreteDistribution::from_parts(35.0, 0.25, masses.clone(), 0.0).unwrap();
        let b = DiscreteDistribution::from_parts(38.0, 0.25, masses, 0.0).unwrap();
        let params = TfParams::default();
        let det = detector();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                average_over_pdte(
                    |ea, eb| tf_point(0.05, 0.05, ea, eb, &det, &params),
                    &a,
                    &b,
                    Compensation::NonCompensated,
                )
                .unwrap()
            })
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.rate_per_pulse.to_bits(), four.rate_per_pulse.to_bits());
        assert_eq!(one.e_x.to_bits(), four.e_x.to_bits());
        assert_eq!(one.e_z.to_bits(), four.e_z.to_bits());
        assert_eq!(
            one.aux_or_zero("p_zz").to_bits(),
            four.aux_or_zero("p_zz").to_bits()
        );
        assert_eq!(mass_total(&one), mass_total(&four));
    }

    fn mass_total(pt: &KeyRatePoint) -> u64 {
        pt.aux_or_zero("gain").to_bits()
    }

    #[test]
    fn unnormalized_distributions_are_rejected() {
        // Constructors normalize, so corrupt statistics can only arrive
        // through deserialization; the averaging entry point re-validates.
        let a = DiscreteDistribution::point_mass(30.0);
        let bad: DiscreteDistribution = serde_json::from_str(
            r#"{"lo_db":30.0,"step_db":0.1,"mass":[0.25],"lost":0.0}"#,
        )
        .unwrap();
        let err = average_over_pdte(synthetic_point, &a, &bad, Compensation::NonCompensated);
        assert!(err.is_err());
    }
}
