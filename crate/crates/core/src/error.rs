use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cannot align series: {0}")]
    Alignment(String),

    #[error("no grid point produced at least {required} change points (best: {best})")]
    Tuning { required: usize, best: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot impute: {0}")]
    Imputation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} not found; it is produced by the {producer} stage")]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Errors caused by bad input data rather than a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Alignment(_)
                | Error::MissingArtifact { .. }
                | Error::Csv(_)
        )
    }
}
