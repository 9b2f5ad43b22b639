//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building channels or evaluating key rates.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent with another.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical failure in {context}: {detail}")]
    Numerics {
        /// Name of the routine that failed.
        context: &'static str,
        /// Human-readable description of the failure.
        detail: String,
    },

    /// A covariance matrix came out with a negative eigenvalue too large to
    /// attribute to round-off.
    #[error(
        "covariance not positive semidefinite: eigenvalue {eigenvalue:.6e} \
         (largest {largest:.6e})"
    )]
    NotPositiveSemidefinite {
        /// The offending (most negative) eigenvalue.
        eigenvalue: f64,
        /// Largest eigenvalue of the same matrix, for scale.
        largest: f64,
    },

    /// Two artifacts that must describe the same configuration do not.
    #[error("input mismatch: {0}")]
    Mismatch(String),

    /// Malformed input file (CSV/TOML/JSON) with location information.
    #[error("parse error in {path}: {detail}")]
    Parse {
        /// File that failed to parse.
        path: String,
        /// What was wrong.
        detail: String,
    },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// TOML deserialization failure.
    #[error(transparent)]
    Toml(#[from] Box<toml::de::Error>),
}

impl Error {
    /// Shorthand for a [`Error::Numerics`] value.
    pub fn numerics(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerics {
            context,
            detail: detail.into(),
        }
    }

    /// Shorthand for a [`Error::Config`] value.
    pub fn config(detail: impl Into<String>) -> Self {
        Error::Config(detail.into())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Toml(Box::new(e))
    }
}
