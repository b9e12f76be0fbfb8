use std::path::PathBuf;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown attribute `{0}` and no merge rule maps it")]
    UnknownAttribute(String),

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("instance `{instance}` has conflicting verdicts for attribute `{attribute}`")]
    ConflictingVerdict { instance: String, attribute: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("incomplete run directory {}: missing {}", dir.display(), missing.join(", "))]
    IncompleteRun { dir: PathBuf, missing: Vec<String> },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
