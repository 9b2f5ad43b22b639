//! Turbulence-induced coupling losses of the pre-compensated uplink.

pub mod coupling;
pub mod covariance;
pub mod profile;
pub mod zernike;

pub use coupling::{sample_coupling, sample_rho_chi, turbulence_distribution, CouplingSampleSet};
pub use covariance::{CorrectionKind, MmseConfig, ResidualPhaseModel};
pub use profile::{Layer, TurbulenceProfile};
pub use zernike::{DiskGrid, NollIndex, ZernikeBasis};
