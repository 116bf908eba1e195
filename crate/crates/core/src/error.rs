use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the filter, scattering, feature and classification layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two operands disagree on a length or dimension.
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    /// Input data is unusable (empty, too short, wrong rate, ...).
    #[error("data error: {0}")]
    Data(String),

    /// An audio file could not be decoded.
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    /// A binary container is malformed.
    #[error("bad container: {0}")]
    Format(String),

    /// A solver produced non-finite values or failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn dim(expected: usize, actual: usize, context: &'static str) -> Self {
        Error::Dimension {
            expected,
            actual,
            context,
        }
    }
}
