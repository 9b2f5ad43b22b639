//! Grid scans over protocol parameters and optimum location.
//!
//! The evaluations behind each grid point are arbitrarily expensive
//! (typically a full average over two attenuation histograms), so scans
//! parallelize over points and gather results by index, keeping output
//! deterministic for any thread count. Optima are located by plain grid
//! search; the grids themselves are configuration-controlled.

use crate::error::{Error, Result};
use crate::protocols::KeyRatePoint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Which parameter a scan varied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanAxis {
    /// Signal intensity μ (photon/pulse).
    Mu,
    /// Maximum pairing gap of the mode-pairing protocol.
    LMax,
    /// Transmitter aperture diameter (m).
    Aperture,
}

/// Aux key under which each scanned point stores its axis coordinate.
pub const AXIS_VALUE_KEY: &str = "axis_value";

/// A completed scan: every evaluated point plus the located optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub axis: ScanAxis,
    /// Points in ascending axis order; each carries its coordinate in
    /// `aux["axis_value"]`.
    pub points: Vec<KeyRatePoint>,
    pub optimum: KeyRatePoint,
    /// Hash of the configuration that produced the scan (stamped by the
    /// pipeline; empty for ad-hoc scans).
    pub config_hash: String,
}

impl ScanReport {
    /// The axis coordinate stored on a point.
    pub fn axis_value(point: &KeyRatePoint) -> f64 {
        point.aux_or_zero(AXIS_VALUE_KEY)
    }

    /// Writes `axis_value,rate_per_pulse,e_x,e_z` rows, preceded by `#`
    /// comment lines.
    pub fn write_csv(&self, mut w: impl Write, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "axis_value,rate_per_pulse,e_x,e_z")?;
        for p in &self.points {
            writeln!(
                w,
                "{:.9e},{:.9e},{:.6e},{:.6e}",
                Self::axis_value(p),
                p.rate_per_pulse,
                p.e_x,
                p.e_z
            )?;
        }
        Ok(())
    }
}

fn tag_axis(mut point: KeyRatePoint, value: f64) -> KeyRatePoint {
    point.aux.insert(AXIS_VALUE_KEY.to_string(), value);
    point
}

/// Largest-rate point; exact rate ties resolve to the earlier (smaller
/// axis value) point.
fn argmax(points: &[KeyRatePoint]) -> KeyRatePoint {
    let mut best = &points[0];
    for p in &points[1..] {
        if p.rate_per_pulse > best.rate_per_pulse {
            best = p;
        }
    }
    best.clone()
}

fn check_log_grid(grid: &[f64], min_len: usize, lo: f64, hi: f64, what: &str) -> Result<()> {
    if grid.len() < min_len {
        return Err(Error::config(format!(
            "{what} grid needs at least {min_len} points, got {}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
        return Err(Error::config(format!(
            "{what} grid must be positive and strictly ascending"
        )));
    }
    if grid[0] > lo * 1.001 || grid[grid.len() - 1] < hi * 0.999 {
        return Err(Error::config(format!(
            "{what} grid must span [{lo}, {hi}], got [{}, {}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    Ok(())
}

/// Scans the signal intensity and reports the best operating point.
///
/// The grid must be positive ascending with at least 20 points spanning
/// [10⁻³, 1]. An all-zero scan is not an error; the optimum then sits at
/// the smallest μ with rate 0.
pub fn scan_mu<F>(evaluator: F, mu_grid: &[f64]) -> Result<ScanReport>
where
    F: Fn(f64) -> Result<KeyRatePoint> + Sync,
{
    check_log_grid(mu_grid, 20, 1e-3, 1.0, "intensity")?;
    let points: Vec<KeyRatePoint> = mu_grid
        .par_iter()
        .map(|&mu| evaluator(mu).map(|p| tag_axis(p, mu)))
        .collect::<Result<_>>()?;
    let optimum = argmax(&points);
    Ok(ScanReport {
        axis: ScanAxis::Mu,
        points,
        optimum,
        config_hash: String::new(),
    })
}

/// Scans the maximum pairing gap and reports the best value, preferring
/// the shortest gap on a plateau.
///
/// The grid must be ascending with at least 15 points spanning
/// [10³, 10⁶]. If the three best rates agree within 1%, the optimum is
/// the smallest `l_max` among them (the rate curve saturates once extra
/// gap length stops adding pairs, and a shorter window accumulates less
/// phase drift for the same rate).
pub fn scan_lmax<F>(evaluator: F, lmax_grid: &[u32]) -> Result<ScanReport>
where
    F: Fn(u32) -> Result<KeyRatePoint> + Sync,
{
    let as_f64: Vec<f64> = lmax_grid.iter().map(|&l| f64::from(l)).collect();
    check_log_grid(&as_f64, 15, 1e3, 1e6, "pairing-gap")?;
    let points: Vec<KeyRatePoint> = lmax_grid
        .par_iter()
        .map(|&l| evaluator(l).map(|p| tag_axis(p, f64::from(l))))
        .collect::<Result<_>>()?;

    // Rank descending by rate; equal rates rank the shorter gap first.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .rate_per_pulse
            .partial_cmp(&points[a].rate_per_pulse)
            .unwrap()
            .then(a.cmp(&b))
    });
    let best = points[order[0]].rate_per_pulse;
    let optimum = if points.len() >= 3 && best > 0.0 {
        let top = &order[..3];
        let spread = (best - points[top[2]].rate_per_pulse) / best;
        if spread < 0.01 {
            points[*top.iter().min().unwrap()].clone()
        } else {
            points[order[0]].clone()
        }
    } else {
        points[order[0]].clone()
    };
    Ok(ScanReport {
        axis: ScanAxis::LMax,
        points,
        optimum,
        config_hash: String::new(),
    })
}

/// Builds a default log grid for [`scan_lmax`]: `n` points spanning
/// [10³, 10⁶], rounded to integers.
pub fn default_lmax_grid(n: usize) -> Vec<u32> {
    crate::math::log_spaced(1e3, 1e6, n.max(15))
        .into_iter()
        .map(|v| v.round() as u32)
        .collect()
}

/// Runs one optimized report per aperture diameter, in the given order.
///
/// `build_report` encapsulates the full pipeline for one diameter
/// (channel statistics, averaging, μ/L_max scan). Diameters run in
/// parallel; results are gathered by index, so the output order and
/// content do not depend on thread count.
pub fn sweep_apertures<F>(diameters: &[f64], build_report: F) -> Result<Vec<(f64, ScanReport)>>
where
    F: Fn(f64) -> Result<ScanReport> + Sync,
{
    if diameters.is_empty() {
        return Err(Error::config("aperture sweep needs at least one diameter".to_string()));
    }
    if diameters.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::config("aperture diameters must be positive".to_string()));
    }
    diameters
        .par_iter()
        .map(|&d| build_report(d).map(|r| (d, r)))
        .collect()
}
