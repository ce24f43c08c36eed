use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum StsaError {
    /// An argument or configuration value violates a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The file ends part-way through a sample.
    #[error("{path}: truncated sample at byte offset {offset} ({trailing} trailing bytes)")]
    Truncated {
        path: PathBuf,
        offset: u64,
        trailing: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl StsaError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        StsaError::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StsaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, StsaError>;
