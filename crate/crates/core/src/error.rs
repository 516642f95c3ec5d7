use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("problem has {n_vars} variables, exceeds the limit of {limit} for {what}")]
    SizeLimit {
        what: &'static str,
        n_vars: usize,
        limit: usize,
    },

    #[error("schedule {source_name}: row {row}: {reason}")]
    Schedule {
        source_name: String,
        row: usize,
        reason: String,
    },

    #[error("eigensolver did not converge at s = {s}: residual norm {residual:e}")]
    NoConvergence { s: f64, residual: f64 },

    #[error("all spectrum levels are degenerate within {tolerance:e}; no gap defined")]
    NoGap { tolerance: f64 },

    #[error("integrator could not meet the norm drift bound: achieved drift {drift:e} at dt = {dt:e}")]
    StepUnderflow { drift: f64, dt: f64 },

    #[error("reverse anneal requires an initial bitstring")]
    MissingInitial,

    #[error("invalid bitstring: {0}")]
    InvalidBits(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
