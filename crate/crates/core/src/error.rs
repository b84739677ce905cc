use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Dempster's rule is undefined when the two sources are certain and opposed.
    #[error("total evidence conflict (K = 1): sources are fully certain and opposed")]
    EvidenceConflict,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    ConfigErrors(Vec<String>),

    #[error("training diverged for client {client}: non-finite weights")]
    TrainingDivergence { client: String },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    #[error("parse error in {path} at byte offset {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Table { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
