//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown relation id {0}")]
    UnknownRelation(usize),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage-class errors (bad config, bad inputs) exit with code 2;
    /// everything else is a runtime failure (exit 1).
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Ingest(_) | Error::Config(_) | Error::Invalid(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
