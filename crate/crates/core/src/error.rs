use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A robot description violates a model invariant. `field` names the
    /// offending entry, e.g. `joints[2].axis`.
    #[error("invalid robot description: {field}: {message}")]
    InvalidModel { field: String, message: String },

    #[error("invalid scenario: {field}: {message}")]
    InvalidScenario { field: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite rollout cost at index {index}")]
    NonFiniteCost { index: usize },

    #[error("{0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn model(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidModel {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidScenario {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
