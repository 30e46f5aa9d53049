use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    /// The data violates a structural requirement (e.g. a single-class dataset).
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("state file {path}: {message}")]
    State { path: PathBuf, message: String },

    #[error("state file {path} was written by a different configuration (digest {found}, expected {expected})")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("fold {fold}, round {round}: {source}")]
    Fold {
        fold: usize,
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_fold(self, fold: usize, round: usize) -> Self {
        match self {
            e @ Error::Fold { .. } => e,
            e => Error::Fold {
                fold,
                round,
                source: Box::new(e),
            },
        }
    }

    /// True when the error stems from user-supplied configuration rather
    /// than from a failure while running.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::DigestMismatch { .. } => true,
            Error::Fold { source, .. } => matches!(**source, Error::Config(_) | Error::DigestMismatch { .. }),
            _ => false,
        }
    }
}
