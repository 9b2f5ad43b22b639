//! Layered refractive-index structure profiles along the uplink path.
//!
//! A profile is a stack of homogeneous turbulence layers, each described by
//! its structure constant and its extent along the propagation path. The
//! integrated path moments give the Fried parameter, the isoplanatic angle,
//! and the (aperture-averaged) log-amplitude variance that the coupling
//! model consumes.

use crate::error::{Error, Result};
use crate::math::bessel::bessel_j1;
use crate::math::quad::gauss_legendre;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// One homogeneous turbulence layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    /// Path distance from the transmitter aperture to the layer center (m).
    pub z_m: f64,
    /// Structure constant Cn^2 (m^-2/3).
    pub cn2: f64,
    /// Extent of the layer along the path (m).
    pub thickness_m: f64,
}

/// A layered Cn^2 profile bound to a wavelength and elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbulenceProfile {
    /// Layers ordered by increasing path distance.
    pub layers: Vec<Layer>,
    /// Operating wavelength (m).
    pub wavelength_m: f64,
    /// Link elevation (rad); already folded into the path distances, kept for
    /// provenance.
    pub elevation_rad: f64,
}

impl TurbulenceProfile {
    /// Builds and validates a profile from explicit layers.
    pub fn from_layers(layers: Vec<Layer>, wavelength_m: f64, elevation_rad: f64) -> Result<Self> {
        let p = TurbulenceProfile {
            layers,
            wavelength_m,
            elevation_rad,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks ordering, positivity, and non-empty-ness.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("profile needs at least one layer".to_string()));
        }
        if !(self.wavelength_m > 0.0) {
            return Err(Error::config("wavelength must be positive".to_string()));
        }
        if !(self.elevation_rad > 0.0 && self.elevation_rad <= PI / 2.0) {
            return Err(Error::config("elevation must lie in (0, pi/2]".to_string()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, l) in self.layers.iter().enumerate() {
            if l.z_m <= prev {
                return Err(Error::config(format!(
                    "layer {i} altitude {} m is not strictly increasing",
                    l.z_m
                )));
            }
            if l.cn2 < 0.0 || !(l.thickness_m > 0.0) || l.z_m < 0.0 {
                return Err(Error::config(format!("layer {i} has invalid parameters")));
            }
            prev = l.z_m;
        }
        Ok(())
    }

    /// Wavenumber `2 pi / lambda`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_m
    }

    /// Path moment `integral Cn^2(z) z^p dz`, exact for piecewise-constant
    /// Cn^2 (each layer integrates `z^p` in closed form over its extent).
    pub fn moment(&self, p: f64) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let lo = (l.z_m - 0.5 * l.thickness_m).max(0.0);
                let hi = l.z_m + 0.5 * l.thickness_m;
                l.cn2 * (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / (p + 1.0)
            })
            .sum()
    }

    /// Fried parameter `r0 = (0.423 k^2 integral Cn^2 dz)^(-3/5)` (m).
    pub fn fried_parameter_m(&self) -> f64 {
        let k = self.wavenumber();
        (0.423 * k * k * self.moment(0.0)).powf(-3.0 / 5.0)
    }

    /// Isoplanatic angle `theta0 = (2.914 k^2 integral Cn^2 z^(5/3) dz)^(-3/5)`
    /// (rad).
    pub fn isoplanatic_angle_rad(&self) -> f64 {
        let k = self.wavenumber();
        (2.914 * k * k * self.moment(5.0 / 3.0)).powf(-3.0 / 5.0)
    }

    /// Point-receiver log-amplitude variance
    /// `sigma_chi^2 = 0.5631 k^(7/6) integral Cn^2 z^(5/6) dz`.
    pub fn log_amplitude_variance(&self) -> f64 {
        0.5631 * self.wavenumber().powf(7.0 / 6.0) * self.moment(5.0 / 6.0)
    }

    /// Log-amplitude variance averaged over an aperture of radius `radius_m`.
    ///
    /// Weak-fluctuation theory with the hard-aperture filter gives
    /// `16 pi^2 0.033 k^2 R^(5/3) integral dz Cn^2(z) I(z / (2 k R^2))` with
    /// `I(c) = integral du u^(-14/3) J1(u)^2 sin^2(c u^2)`. As `R -> 0` this
    /// collapses to [`Self::log_amplitude_variance`]; growing apertures
    /// average the fluctuations away.
    pub fn aperture_averaged_variance(&self, radius_m: f64) -> Result<f64> {
        if !(radius_m > 0.0) {
            return Err(Error::config(format!(
                "aperture radius must be positive, got {radius_m}"
            )));
        }
        let k = self.wavenumber();
        let prefactor = 16.0 * PI * PI * 0.033 * k * k * radius_m.powf(5.0 / 3.0);
        let mut total = 0.0;
        for l in &self.layers {
            if l.cn2 == 0.0 {
                continue;
            }
            let c = l.z_m / (2.0 * k * radius_m * radius_m);
            total += l.cn2 * l.thickness_m * aperture_filter_integral(c)?;
        }
        Ok(prefactor * total)
    }

    /// Returns a copy with every layer's Cn^2 multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> TurbulenceProfile {
        let mut p = self.clone();
        for l in &mut p.layers {
            l.cn2 *= factor;
        }
        p
    }

    /// Synthesizes a profile calibrated to integrated parameters.
    ///
    /// Two height-shaped components — a high-altitude bump
    /// `(1e-5 h)^10 exp(-h / H1)` and a ground layer `exp(-h / 100 m)` — are
    /// mixed so the discretized moments hit `r0` and `theta0` exactly
    /// (2x2 linear solve), and the bump altitude scale `H1` is bisected so
    /// the log-amplitude variance lands on `sigma_chi2`. Heights are mapped
    /// to path distances through the elevation.
    pub fn synthetic_calibrated(
        r0_m: f64,
        theta0_rad: f64,
        sigma_chi2: f64,
        wavelength_m: f64,
        elevation_rad: f64,
    ) -> Result<TurbulenceProfile> {
        if !(r0_m > 0.0 && theta0_rad > 0.0 && sigma_chi2 >= 0.0) {
            return Err(Error::config(
                "calibration targets must be positive (sigma_chi2 >= 0)".to_string(),
            ));
        }
        let k = 2.0 * PI / wavelength_m;
        let i0_target = r0_m.powf(-5.0 / 3.0) / (0.423 * k * k);
        let i53_target = theta0_rad.powf(-5.0 / 3.0) / (2.914 * k * k);

        let build = |h1: f64| -> Result<TurbulenceProfile> {
            synthesize(h1, i0_target, i53_target, wavelength_m, elevation_rad)
        };

        // sigma_chi^2 grows as the bump moves up; bisect the bump scale.
        let mut lo = 400.0;
        let mut hi = 4000.0;
        let f = |h1: f64| -> Result<f64> { Ok(build(h1)?.log_amplitude_variance() - sigma_chi2) };
        let (flo, fhi) = (f(lo)?, f(hi)?);
        if flo * fhi > 0.0 {
            return Err(Error::numerics(
                "profile calibration",
                format!(
                    "sigma_chi2 target {sigma_chi2} not bracketed: [{:.4}, {:.4}]",
                    flo + sigma_chi2,
                    fhi + sigma_chi2
                ),
            ));
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? * f(lo)? <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let profile = build(0.5 * (lo + hi))?;
        if profile.layers.iter().any(|l| l.cn2 < 0.0) {
            return Err(Error::numerics(
                "profile calibration",
                "calibrated profile has negative Cn^2".to_string(),
            ));
        }
        profile.validate()?;
        Ok(profile)
    }

    /// Writes the layer stack as `z_m,cn2,thickness_m` CSV.
    pub fn write_csv(&self, mut w: impl Write, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "z_m,cn2,thickness_m")?;
        for l in &self.layers {
            writeln!(w, "{:.10e},{:.16e},{:.10e}", l.z_m, l.cn2, l.thickness_m)?;
        }
        Ok(())
    }

    /// Reads a layer stack written by [`Self::write_csv`].
    pub fn read_csv(
        r: impl BufRead,
        wavelength_m: f64,
        elevation_rad: f64,
    ) -> Result<TurbulenceProfile> {
        let mut layers = Vec::new();
        let mut seen_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !seen_header {
                if trimmed != "z_m,cn2,thickness_m" {
                    return Err(Error::Parse {
                        path: "<profile csv>".to_string(),
                        detail: format!("unexpected header {trimmed:?} at line {}", lineno + 1),
                    });
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: "<profile csv>".to_string(),
                    detail: format!("expected three columns at line {}", lineno + 1),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: "<profile csv>".to_string(),
                    detail: format!("bad number {s:?} at line {}: {e}", lineno + 1),
                })
            };
            layers.push(Layer {
                z_m: parse(fields[0])?,
                cn2: parse(fields[1])?,
                thickness_m: parse(fields[2])?,
            });
        }
        TurbulenceProfile::from_layers(layers, wavelength_m, elevation_rad)
    }
}

/// Builds the two-component profile for a given bump height scale and solves
/// the component strengths so the discrete moments match the targets exactly.
fn synthesize(
    h1: f64,
    i0_target: f64,
    i53_target: f64,
    wavelength_m: f64,
    elevation_rad: f64,
) -> Result<TurbulenceProfile> {
    let sin_e = elevation_rad.sin();
    // Geometric height grid from the surface layer up to 30 km.
    let mut edges = vec![0.0_f64, 25.0];
    let ratio = (30_000.0_f64 / 25.0).powf(1.0 / 47.0);
    for j in 1..=47 {
        edges.push(25.0 * ratio.powi(j));
    }
    let bump = |h: f64| (1e-5 * h).powi(10) * (-h / h1).exp();
    let ground = |h: f64| (-h / 100.0).exp();

    // Path moments of each unit-strength shape on this grid.
    let mut m = [[0.0_f64; 2]; 2]; // rows: p in {0, 5/3}; cols: shape
    let mut proto: Vec<(f64, f64, f64, f64)> = Vec::new(); // z, thickness, bump, ground
    for w in edges.windows(2) {
        let (h_lo, h_hi) = (w[0], w[1]);
        let h_c = 0.5 * (h_lo + h_hi);
        let z_lo = h_lo / sin_e;
        let z_hi = h_hi / sin_e;
        let z_c = 0.5 * (z_lo + z_hi);
        let shapes = [bump(h_c), ground(h_c)];
        for (col, s) in shapes.iter().enumerate() {
            m[0][col] += s * (z_hi - z_lo);
            m[1][col] += s * (z_hi.powf(8.0 / 3.0) - z_lo.powf(8.0 / 3.0)) / (8.0 / 3.0);
        }
        proto.push((z_c, z_hi - z_lo, shapes[0], shapes[1]));
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 {
        return Err(Error::numerics(
            "profile calibration",
            "degenerate moment system".to_string(),
        ));
    }
    let c_bump = (i0_target * m[1][1] - i53_target * m[0][1]) / det;
    let c_ground = (i53_target * m[0][0] - i0_target * m[1][0]) / det;
    let layers = proto
        .into_iter()
        .map(|(z, t, b, g)| Layer {
            z_m: z,
            cn2: c_bump * b + c_ground * g,
            thickness_m: t,
        })
        .collect();
    Ok(TurbulenceProfile {
        layers,
        wavelength_m,
        elevation_rad,
    })
}

/// `I(c) = integral_0^inf u^(-14/3) J1(u)^2 sin^2(c u^2) du`.
///
/// Panels follow the zeros of `sin(c u^2)` in the oscillatory region and a
/// uniform grid elsewhere, with 16-point Gauss-Legendre inside each panel.
fn aperture_filter_integral(c: f64) -> Result<f64> {
    if c == 0.0 {
        return Ok(0.0);
    }
    const U_MAX: f64 = 60.0;
    const U_FINE: f64 = 3.0;
    let mut bounds: Vec<f64> = Vec::new();
    // Uniform skeleton.
    let mut u = 0.0;
    while u < U_MAX {
        bounds.push(u);
        u += if u < U_FINE { 0.5 } else { 0.5 };
    }
    bounds.push(U_MAX);
    // Oscillation zeros below U_FINE: u_k = sqrt(k pi / c).
    let mut k = 1.0;
    loop {
        let z = (k * PI / c).sqrt();
        if z >= U_FINE {
            break;
        }
        bounds.push(z);
        k += 1.0;
        if k > 2e6 {
            return Err(Error::numerics(
                "aperture averaging",
                format!("oscillation too fast to resolve (c = {c:.3e})"),
            ));
        }
    }
    bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bounds.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let rule = gauss_legendre(16);
    let integrand = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let j1 = bessel_j1(u);
        let s = (c * u * u).sin();
        u.powf(-14.0 / 3.0) * j1 * j1 * s * s
    };
    let mut total = 0.0;
    for w in bounds.windows(2) {
        total += rule.integrate(w[0], w[1], integrand);
    }
    if !total.is_finite() {
        return Err(Error::numerics(
            "aperture averaging",
            "non-finite filter integral".to_string(),
        ));
    }
    Ok(total)
}
