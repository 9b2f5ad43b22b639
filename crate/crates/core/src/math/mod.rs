//! Special functions and quadrature shared across the physics modules.

pub mod bessel;
pub mod gamma;
pub mod quad;

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
///
/// Both endpoints must be positive and `n` at least 2.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(lo > 0.0 && hi > lo && n >= 2);
    let (la, lb) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Piecewise-linear interpolation on a strictly increasing grid.
///
/// Values outside the grid clamp to the end values; the grids used here are
/// built to cover the full query range, so clamping only absorbs round-off.
pub fn linear_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    // partition_point returns the first index with xs[i] > x, which is >= 1.
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}
