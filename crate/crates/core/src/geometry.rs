//! Deterministic geometry of the ground-to-satellite link.
//!
//! Everything here is fixed by the orbit and the telescope hardware: slant
//! range at a given elevation, diffraction-limited geometric throughput,
//! far-field spot size, and the static tilt produced by the point-ahead
//! offset. The stochastic pieces (turbulence, jitter) build on these numbers.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6.371e6;

/// Geostationary altitude above the surface in meters.
pub const GEO_ALTITUDE_M: f64 = 3.5786e7;

/// Fixed geometry of one uplink: apertures, wavelength, and orbit.
///
/// All fields are in SI base units (meters, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    /// Transmitter (ground station) aperture diameter.
    pub ogs_diameter_m: f64,
    /// Receiver (satellite) aperture diameter.
    pub sat_diameter_m: f64,
    /// Operating wavelength.
    pub wavelength_m: f64,
    /// Elevation of the satellite above the local horizon.
    pub elevation_rad: f64,
    /// Satellite altitude above the surface.
    pub sat_altitude_m: f64,
    /// Earth radius used for the slant-range computation.
    pub earth_radius_m: f64,
    /// Point-ahead angle between uplink and downlink directions.
    pub point_ahead_rad: f64,
    /// Residual static pointing misalignment after point-ahead correction.
    pub misalignment_rad: f64,
}

impl LinkGeometry {
    /// A 1 m ground aperture talking to a 0.5 m geostationary receiver at
    /// 1550 nm and 30 degrees elevation.
    pub fn geo_default() -> Self {
        LinkGeometry {
            ogs_diameter_m: 1.0,
            sat_diameter_m: 0.5,
            wavelength_m: 1.550e-6,
            elevation_rad: 30.0_f64.to_radians(),
            sat_altitude_m: GEO_ALTITUDE_M,
            earth_radius_m: EARTH_RADIUS_M,
            point_ahead_rad: 18.5e-6,
            misalignment_rad: 0.2e-6,
        }
    }

    /// Checks that every field is physically sensible.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ogs_diameter_m", self.ogs_diameter_m),
            ("sat_diameter_m", self.sat_diameter_m),
            ("wavelength_m", self.wavelength_m),
            ("sat_altitude_m", self.sat_altitude_m),
            ("earth_radius_m", self.earth_radius_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.elevation_rad > 0.0 && self.elevation_rad <= PI / 2.0) {
            return Err(Error::config(format!(
                "elevation must lie in (0, pi/2], got {} rad",
                self.elevation_rad
            )));
        }
        if self.point_ahead_rad < 0.0 || self.misalignment_rad < 0.0 {
            return Err(Error::config(
                "point-ahead and misalignment angles must be non-negative".to_string(),
            ));
        }
        Ok(())
    }

    /// Wavenumber `2 pi / lambda`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_m
    }

    /// Line-of-sight distance from the ground station to the satellite.
    ///
    /// Spherical-Earth geometry: with `Re` the Earth radius, `h` the orbit
    /// altitude and `eps` the elevation, the range is
    /// `sqrt((Re + h)^2 - Re^2 cos^2 eps) - Re sin eps`.
    pub fn slant_range_m(&self) -> f64 {
        let re = self.earth_radius_m;
        let orbit = re + self.sat_altitude_m;
        let cos_e = self.elevation_rad.cos();
        (orbit * orbit - re * re * cos_e * cos_e).sqrt() - re * self.elevation_rad.sin()
    }

    /// Diffraction-limited fraction of transmitted power collected by the
    /// receiver aperture: `(pi D_tx D_rx / (4 lambda L))^2`.
    pub fn geometric_efficiency(&self) -> f64 {
        let l = self.slant_range_m();
        let amp = PI * self.ogs_diameter_m * self.sat_diameter_m / (4.0 * self.wavelength_m * l);
        amp * amp
    }

    /// [`Self::geometric_efficiency`] expressed as attenuation in dB.
    pub fn geometric_loss_db(&self) -> f64 {
        -10.0 * self.geometric_efficiency().log10()
    }

    /// Waist of the Gaussian mode launched from the ground aperture.
    ///
    /// The mode is truncated by the aperture at `D / 2.2`, the usual
    /// compromise between truncation loss and far-field divergence.
    pub fn beam_waist_m(&self) -> f64 {
        self.ogs_diameter_m / 2.2
    }

    /// `1/e^2` intensity radius of the beam at the satellite, in the
    /// far-field limit `w = lambda L / (pi w0)`.
    pub fn far_field_spot_radius_m(&self) -> f64 {
        self.wavelength_m * self.slant_range_m() / (PI * self.beam_waist_m())
    }

    /// Transverse displacement at the satellite caused by a small pointing
    /// angle error.
    pub fn displacement_for_angle_m(&self, angle_rad: f64) -> f64 {
        self.slant_range_m() * angle_rad
    }

    /// Amplitude (in radians of phase) of the unit-variance tilt mode
    /// corresponding to the static misalignment angle.
    ///
    /// A pointing offset `da` across an aperture of diameter `D` is the
    /// wavefront `k da x`; projected on the tilt mode `2 rho cos(theta)`
    /// (unit rms over the pupil) the modal amplitude is `pi D da / (2 lambda)`.
    pub fn misalignment_tilt_amplitude(&self) -> f64 {
        PI * self.ogs_diameter_m * self.misalignment_rad / (2.0 * self.wavelength_m)
    }
}
