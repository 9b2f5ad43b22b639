//! Discrete probability distributions of transmission efficiency.
//!
//! Fading factors (turbulence coupling, pointing jitter) and their products
//! are represented as probability mass on a uniform attenuation grid in dB.
//! Working in dB turns the product of independent efficiencies into an
//! additive convolution of grid indices, which is numerically robust across
//! the link's 60+ dB dynamic range.

use crate::error::{Error, Result};
use crate::rng::pairwise_sum;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Default grid resolution in dB.
pub const DEFAULT_STEP_DB: f64 = 0.1;

/// Default upper edge of the attenuation grid; mass beyond it is treated as
/// effectively lost (zero transmittance).
pub const DEFAULT_MAX_DB: f64 = 160.0;

/// Converts attenuation in dB to linear transmission efficiency.
pub fn db_to_eta(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Converts linear transmission efficiency to attenuation in dB.
pub fn eta_to_db(eta: f64) -> f64 {
    -10.0 * eta.log10()
}

/// Summary statistics of a [`DiscreteDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    /// Mean transmission efficiency, computed in the linear domain.
    pub mean_eta: f64,
    /// Mean attenuation in dB over the finite bins.
    pub mean_db: f64,
    /// 5th percentile of attenuation (dB).
    pub p5_db: f64,
    /// Median attenuation (dB).
    pub p50_db: f64,
    /// 95th percentile of attenuation (dB).
    pub p95_db: f64,
    /// Probability mass beyond the grid's upper edge.
    pub lost: f64,
}

/// Probability mass over a uniform attenuation grid.
///
/// Grid value `i` sits at `lo_db + i * step_db`. Negative attenuations are
/// allowed (scintillation can push instantaneous efficiency above its
/// flat-wavefront reference). Mass that falls beyond a capped grid's upper
/// edge accumulates in a terminal "lost" bucket that consumers treat as zero
/// transmittance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    lo_db: f64,
    step_db: f64,
    mass: Vec<f64>,
    lost: f64,
    /// Free-form provenance tag carried into exported files.
    #[serde(default)]
    pub label: String,
}

impl DiscreteDistribution {
    /// A distribution with all mass in the single bin at `db`.
    pub fn point_mass(db: f64) -> Self {
        DiscreteDistribution {
            lo_db: db,
            step_db: DEFAULT_STEP_DB,
            mass: vec![1.0],
            lost: 0.0,
            label: String::new(),
        }
    }

    /// Builds a distribution from raw bin data.
    ///
    /// Intended for tests and file ingestion; the mass is renormalized.
    pub fn from_parts(lo_db: f64, step_db: f64, mass: Vec<f64>, lost: f64) -> Result<Self> {
        if !(step_db > 0.0) || mass.is_empty() {
            return Err(Error::config(
                "distribution needs a positive step and at least one bin".to_string(),
            ));
        }
        if mass.iter().any(|&m| m < 0.0 || !m.is_finite()) || lost < 0.0 {
            return Err(Error::config("probability mass must be non-negative".to_string()));
        }
        let mut d = DiscreteDistribution {
            lo_db,
            step_db,
            mass,
            lost,
            label: String::new(),
        };
        d.normalize()?;
        Ok(d)
    }

    /// Histograms efficiency samples onto a fresh grid of the given step.
    ///
    /// Each sample's mass is split linearly between the two bracketing bins,
    /// which preserves the sample mean attenuation exactly and the linear
    /// mean to second order in the step. Samples attenuated beyond
    /// [`DEFAULT_MAX_DB`] land in the lost bucket; non-positive efficiencies
    /// are lost outright.
    pub fn from_eta_samples(etas: &[f64], step_db: f64) -> Result<Self> {
        if etas.is_empty() {
            return Err(Error::config("cannot histogram an empty sample set".to_string()));
        }
        if !(step_db > 0.0) {
            return Err(Error::config(format!("step must be positive, got {step_db}")));
        }
        let dbs: Vec<Option<f64>> = etas
            .iter()
            .map(|&eta| {
                if eta > 0.0 {
                    let db = eta_to_db(eta);
                    (db <= DEFAULT_MAX_DB).then_some(db)
                } else {
                    None
                }
            })
            .collect();
        let finite_min = dbs
            .iter()
            .flatten()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if !finite_min.is_finite() {
            // Every sample was lost; park the grid at the cap.
            return DiscreteDistribution::from_parts(DEFAULT_MAX_DB, step_db, vec![0.0, 0.0], 1.0);
        }
        let lo = (finite_min / step_db).floor() * step_db;
        let finite_max = dbs.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let n_bins = ((finite_max - lo) / step_db).ceil() as usize + 2;
        let mut mass = vec![0.0; n_bins];
        let w = 1.0 / etas.len() as f64;
        let mut lost = 0.0;
        for db in &dbs {
            match db {
                Some(db) => deposit(&mut mass, lo, step_db, *db, w),
                None => lost += w,
            }
        }
        let mut d = DiscreteDistribution {
            lo_db: lo,
            step_db,
            mass,
            lost,
            label: String::new(),
        };
        d.normalize()?;
        Ok(d)
    }

    /// Attenuation of the first bin (dB).
    pub fn lo_db(&self) -> f64 {
        self.lo_db
    }

    /// Grid spacing (dB).
    pub fn step_db(&self) -> f64 {
        self.step_db
    }

    /// Number of finite bins.
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    /// True when there are no finite bins (never produced by constructors).
    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Attenuation of bin `i` in dB.
    pub fn value_db(&self, i: usize) -> f64 {
        self.lo_db + i as f64 * self.step_db
    }

    /// The probability mass per finite bin.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Mass beyond the upper grid edge (treated as zero transmittance).
    pub fn lost_mass(&self) -> f64 {
        self.lost
    }

    /// `(attenuation_db, mass)` for every bin carrying more than `min_mass`.
    pub fn significant_bins(&self, min_mass: f64) -> Vec<(f64, f64)> {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > min_mass)
            .map(|(i, &m)| (self.value_db(i), m))
            .collect()
    }

    fn normalize(&mut self) -> Result<()> {
        let total = pairwise_sum(&self.mass) + self.lost;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::numerics(
                "distribution normalization",
                format!("total mass {total} not positive and finite"),
            ));
        }
        let inv = 1.0 / total;
        for m in &mut self.mass {
            *m *= inv;
        }
        self.lost *= inv;
        Ok(())
    }

    /// Checks the normalization and non-negativity invariants.
    pub fn validate(&self) -> Result<()> {
        if self.mass.iter().any(|&m| m < 0.0) || self.lost < 0.0 {
            return Err(Error::config("negative probability mass".to_string()));
        }
        let total = pairwise_sum(&self.mass) + self.lost;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("mass sums to {total}, expected 1")));
        }
        Ok(())
    }

    /// Distribution of the product of two independent efficiencies.
    ///
    /// In dB the product is a sum, so this is a direct additive convolution
    /// of the two grids. Both inputs must share the same step.
    pub fn convolve_product(&self, other: &DiscreteDistribution) -> Result<DiscreteDistribution> {
        if (self.step_db - other.step_db).abs() > 1e-12 {
            return Err(Error::config(format!(
                "grid step mismatch: {} vs {} dB",
                self.step_db, other.step_db
            )));
        }
        let n = self.mass.len() + other.mass.len() - 1;
        let mut mass = vec![0.0; n];
        for (i, &ma) in self.mass.iter().enumerate() {
            if ma == 0.0 {
                continue;
            }
            for (j, &mb) in other.mass.iter().enumerate() {
                mass[i + j] += ma * mb;
            }
        }
        // Anything lost on either side stays lost after multiplying by an
        // efficiency <= 1 equivalent; the complement survives.
        let lost = self.lost + other.lost - self.lost * other.lost;
        let mut d = DiscreteDistribution {
            lo_db: self.lo_db + other.lo_db,
            step_db: self.step_db,
            mass,
            lost,
            label: String::new(),
        };
        d.normalize()?;
        Ok(d)
    }

    /// Shifts every bin by a fixed attenuation; the shape is untouched.
    pub fn shift_db(&self, delta_db: f64) -> DiscreteDistribution {
        DiscreteDistribution {
            lo_db: self.lo_db + delta_db,
            ..self.clone()
        }
    }

    /// Re-grids onto the canonical capped grid `[lo_db, hi_db]`.
    ///
    /// Bin mass is re-deposited with the same linear splitting used for
    /// samples; mass beyond `hi_db` joins the lost bucket, mass below
    /// `lo_db` clamps into the first bin.
    pub fn capped(&self, lo_db: f64, hi_db: f64) -> Result<DiscreteDistribution> {
        if !(hi_db > lo_db) {
            return Err(Error::config(format!(
                "invalid cap range [{lo_db}, {hi_db}] dB"
            )));
        }
        let n = ((hi_db - lo_db) / self.step_db).round() as usize + 1;
        let mut mass = vec![0.0; n];
        let mut lost = self.lost;
        for (i, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let db = self.value_db(i);
            if db > hi_db + 1e-12 {
                lost += m;
            } else {
                deposit(&mut mass, lo_db, self.step_db, db.max(lo_db), m);
            }
        }
        let mut d = DiscreteDistribution {
            lo_db,
            step_db: self.step_db,
            mass,
            lost,
            label: self.label.clone(),
        };
        d.normalize()?;
        Ok(d)
    }

    /// Distribution of the worse (higher-attenuation) of two independent
    /// draws — the channel seen by both parties when the better arm is
    /// deliberately attenuated down to match the worse one.
    ///
    /// Grids must share step and be offset by a whole number of steps.
    pub fn max_attenuation(&self, other: &DiscreteDistribution) -> Result<DiscreteDistribution> {
        if (self.step_db - other.step_db).abs() > 1e-12 {
            return Err(Error::config("grid step mismatch in max_attenuation".to_string()));
        }
        let offset = (other.lo_db - self.lo_db) / self.step_db;
        if (offset - offset.round()).abs() > 1e-6 {
            return Err(Error::config(
                "grids must be offset by whole bins in max_attenuation".to_string(),
            ));
        }
        let offset = offset.round() as i64;
        // Union grid in units of self's index space.
        let a_lo = 0i64;
        let a_hi = self.mass.len() as i64 - 1;
        let b_lo = offset;
        let b_hi = offset + other.mass.len() as i64 - 1;
        let lo = a_lo.min(b_lo);
        let hi = a_hi.max(b_hi);
        let n = (hi - lo + 1) as usize;
        // P(max <= x) = F_a(x) * F_b(x); the lost bucket never counts as <= x.
        let mut mass = vec![0.0; n];
        let mut cdf_a = 0.0;
        let mut cdf_b = 0.0;
        let mut prev = 0.0;
        for k in 0..n {
            let idx = lo + k as i64;
            if idx >= a_lo && idx <= a_hi {
                cdf_a += self.mass[(idx - a_lo) as usize];
            }
            if idx >= b_lo && idx <= b_hi {
                cdf_b += other.mass[(idx - b_lo) as usize];
            }
            let joint = cdf_a * cdf_b;
            mass[k] = (joint - prev).max(0.0);
            prev = joint;
        }
        let lost = 1.0 - prev;
        let mut d = DiscreteDistribution {
            lo_db: self.lo_db + lo as f64 * self.step_db,
            step_db: self.step_db,
            mass,
            lost: lost.max(0.0),
            label: String::new(),
        };
        d.normalize()?;
        Ok(d)
    }

    /// Mean transmission efficiency (linear domain; the lost bucket counts
    /// as zero).
    pub fn mean_eta(&self) -> f64 {
        let terms: Vec<f64> = self
            .mass
            .iter()
            .enumerate()
            .map(|(i, &m)| m * db_to_eta(self.value_db(i)))
            .collect();
        pairwise_sum(&terms)
    }

    /// Summary statistics.
    pub fn stats(&self) -> DistributionStats {
        let finite = 1.0 - self.lost;
        let weighted: Vec<f64> = self
            .mass
            .iter()
            .enumerate()
            .map(|(i, &m)| m * self.value_db(i))
            .collect();
        let mean_db = if finite > 0.0 {
            pairwise_sum(&weighted) / finite
        } else {
            f64::INFINITY
        };
        DistributionStats {
            mean_eta: self.mean_eta(),
            mean_db,
            p5_db: self.percentile_db(0.05),
            p50_db: self.percentile_db(0.50),
            p95_db: self.percentile_db(0.95),
            lost: self.lost,
        }
    }

    /// Attenuation below which a fraction `q` of the mass lies.
    ///
    /// If `q` reaches into the lost bucket the upper grid edge is returned.
    pub fn percentile_db(&self, q: f64) -> f64 {
        let mut cum = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            cum += m;
            if cum >= q {
                return self.value_db(i);
            }
        }
        self.value_db(self.mass.len() - 1)
    }

    /// Writes the distribution as CSV with leading `#` comment lines.
    ///
    /// A final `inf` row carries the lost-bucket mass when it is non-zero.
    pub fn write_csv(&self, mut w: impl Write, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        if !self.label.is_empty() {
            writeln!(w, "# label: {}", self.label)?;
        }
        writeln!(w, "attenuation_db,probability")?;
        for (i, &m) in self.mass.iter().enumerate() {
            writeln!(w, "{:.4},{:.16e}", self.value_db(i), m)?;
        }
        if self.lost > 0.0 {
            writeln!(w, "inf,{:.16e}", self.lost)?;
        }
        Ok(())
    }

    /// Reads a distribution written by [`Self::write_csv`].
    ///
    /// Returns the distribution together with the `#` comment lines (sans
    /// marker) so callers can check provenance stamps.
    pub fn read_csv(r: impl BufRead) -> Result<(DiscreteDistribution, Vec<String>)> {
        let mut comments = Vec::new();
        let mut rows: Vec<(f64, f64)> = Vec::new();
        let mut lost = 0.0;
        let mut seen_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(c) = trimmed.strip_prefix('#') {
                comments.push(c.trim().to_string());
                continue;
            }
            if !seen_header {
                if trimmed != "attenuation_db,probability" {
                    return Err(Error::Parse {
                        path: "<csv>".to_string(),
                        detail: format!("unexpected header {trimmed:?} at line {}", lineno + 1),
                    });
                }
                seen_header = true;
                continue;
            }
            let mut parts = trimmed.split(',');
            let (a, b) = (parts.next(), parts.next());
            let (Some(a), Some(b), None) = (a, b, parts.next()) else {
                return Err(Error::Parse {
                    path: "<csv>".to_string(),
                    detail: format!("expected two columns at line {}", lineno + 1),
                });
            };
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: "<csv>".to_string(),
                    detail: format!("bad number {s:?} at line {}: {e}", lineno + 1),
                })
            };
            let db = parse(a)?;
            let m = parse(b)?;
            if db.is_infinite() {
                lost += m;
            } else {
                rows.push((db, m));
            }
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                path: "<csv>".to_string(),
                detail: "no data rows".to_string(),
            });
        }
        let lo = rows[0].0;
        let step = if rows.len() > 1 {
            (rows[rows.len() - 1].0 - lo) / (rows.len() - 1) as f64
        } else {
            DEFAULT_STEP_DB
        };
        // The grid must be uniform; verify against the implied spacing.
        for (i, &(db, _)) in rows.iter().enumerate() {
            let expect = lo + i as f64 * step;
            if (db - expect).abs() > 1e-6 {
                return Err(Error::Parse {
                    path: "<csv>".to_string(),
                    detail: format!("non-uniform grid at {db} dB (expected {expect})"),
                });
            }
        }
        let mass = rows.iter().map(|&(_, m)| m).collect();
        let d = DiscreteDistribution::from_parts(lo, step, mass, lost)?;
        Ok((d, comments))
    }
}

/// Splits `weight` at position `db` linearly between the two bracketing bins.
fn deposit(mass: &mut [f64], lo: f64, step: f64, db: f64, weight: f64) {
    let f = (db - lo) / step;
    let i = f.floor();
    let frac = f - i;
    let i = (i.max(0.0) as usize).min(mass.len() - 1);
    let j = (i + 1).min(mass.len() - 1);
    mass[i] += weight * (1.0 - frac);
    mass[j] += weight * frac;
}
