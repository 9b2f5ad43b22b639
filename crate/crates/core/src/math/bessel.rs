//! Bessel functions of the first kind and the modified function `I0`.
//!
//! The covariance quadratures need whole sequences `J_0..J_n` at each
//! integration node, which Miller's downward-recurrence algorithm delivers in
//! one pass per node.

/// Computes `J_0(x) .. J_{n_max}(x)` by Miller's algorithm.
///
/// Downward recurrence from a start order well above both `n_max` and `x`
/// converges onto the minimal solution (which is `J_n`); the result is then
/// normalized with the identity `J_0 + 2 J_2 + 2 J_4 + ... = 1`.
///
/// `x` must be non-negative; accuracy is roughly 1e-13 relative for the orders
/// and arguments used here (`x` up to a few hundred).
pub fn bessel_j_seq(n_max: usize, x: f64) -> Vec<f64> {
    debug_assert!(x >= 0.0, "bessel_j_seq requires x >= 0, got {x}");
    if x == 0.0 {
        let mut out = vec![0.0; n_max + 1];
        out[0] = 1.0;
        return out;
    }
    // Start index: beyond the turning point max(n_max, x) plus a safety
    // margin that scales like sqrt of the turning point, rounded up to even.
    let turn = (n_max as f64).max(x);
    let mut start = (turn + 20.0 + 1.5 * turn.sqrt()).ceil() as usize;
    if start % 2 == 1 {
        start += 1;
    }

    let mut out = vec![0.0; n_max + 1];
    let mut jp = 0.0_f64; // J_{k+1} in arbitrary scale
    let mut j = 1e-250_f64; // J_k, seeded at the start order
    let mut norm = 2.0 * j; // start is even, so J_start enters with weight 2
    for k in (1..=start).rev() {
        // Three-term recurrence downward: J_{k-1} = (2k/x) J_k - J_{k+1}.
        let jm = (2.0 * k as f64 / x) * j - jp;
        jp = j;
        j = jm;
        let idx = k - 1;
        if idx <= n_max {
            out[idx] = j;
        }
        if idx % 2 == 0 {
            norm += if idx == 0 { j } else { 2.0 * j };
        }
        // Rescale to avoid overflow of the unnormalized minimal solution.
        if j.abs() > 1e250 {
            let scale = 1e-250;
            j *= scale;
            jp *= scale;
            norm *= scale;
            for v in out.iter_mut() {
                *v *= scale;
            }
        }
    }
    let inv = 1.0 / norm;
    for v in out.iter_mut() {
        *v *= inv;
    }
    out
}

/// `J_1(x)` for a single argument.
pub fn bessel_j1(x: f64) -> f64 {
    bessel_j_seq(1, x)[1]
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series for moderate arguments, asymptotic expansion beyond; the
/// argument is assumed non-negative (it is a photon-number scale here).
pub fn bessel_i0(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "bessel_i0 requires x >= 0, got {x}");
    if x <= 20.0 {
        // I0(x) = sum_k (x^2/4)^k / (k!)^2 -- all terms positive, fast decay.
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= q / ((k * k) as f64);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum
    } else {
        // Asymptotic series I0(x) ~ e^x / sqrt(2 pi x) * sum_k a_k u^k with
        // u = 1/(8x); truncation error ~1e-8 relative at the switch point.
        let u = 1.0 / (8.0 * x);
        let series = 1.0 + u * (1.0 + u * (4.5 + u * (37.5 + u * (459.375 + u * 7441.875))));
        x.exp() / (2.0 * std::f64::consts::PI * x).sqrt() * series
    }
}
