use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("the Gibbs measure of this potential has infinite mass")]
    InfiniteMass,

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("discretization failure at step {step}: node {node} has value {value:e}")]
    DiscretizationFailure { step: usize, node: usize, value: f64 },

    #[error("time {t} outside of the covered interval [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("unsupported potential: {0}")]
    UnsupportedPotential(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown verification `{name}`; available: {available}")]
    UnknownVerification { name: String, available: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
