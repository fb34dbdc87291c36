use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] ocpls_core::Error),
}

impl BenchError {
    /// Errors caused by the configuration rather than the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(self, BenchError::Parse { .. } | BenchError::Validation { .. })
    }
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;
