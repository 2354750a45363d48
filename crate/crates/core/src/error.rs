use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DacError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("source training failed: {0}")]
    TrainingFailure(String),

    #[error("non-finite loss at epoch {epoch}, iteration {iteration}: {detail}")]
    Divergence {
        epoch: usize,
        iteration: usize,
        detail: String,
    },
}

impl DacError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DacError::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(row: usize, msg: impl Into<String>) -> Self {
        DacError::Parse {
            row,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DacError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, DacError>;
