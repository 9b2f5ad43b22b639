//! Simulation of an adaptive-optics-corrected optical uplink to a
//! geostationary relay and the secret-key rates of twin-field and
//! mode-pairing QKD over the resulting fading channels.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`geometry`] fixes the deterministic link budget (diffraction,
//!    pointing geometry, slant range).
//! 2. [`turbulence`] samples the transmission efficiency of the corrected
//!    beam through atmospheric turbulence (modal phase statistics plus
//!    aperture-averaged scintillation).
//! 3. [`jitter`] adds the residual platform pointing error.
//! 4. [`channel`] combines everything into a discrete probability
//!    distribution of transmission efficiency and offers the distribution
//!    algebra (products, minima, statistics) the protocols need.
//! 5. [`protocols`] evaluates twin-field and mode-pairing key rates for
//!    fixed channels and averaged over fading.
//! 6. [`optimize`] searches intensity and pairing parameters.
//! 7. [`pipeline`] ties the stages together behind the run configuration in
//!    [`config`].
//!
//! All stochastic stages draw from counter-derived substreams ([`rng`]) so a
//! run is reproducible bit-for-bit from `(config, seed)` at any thread count.

pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod jitter;
pub mod math;
pub mod optimize;
pub mod pipeline;
pub mod protocols;
pub mod rng;
pub mod turbulence;

pub use error::{Error, Result};
