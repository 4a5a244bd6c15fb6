use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    Validation(String),

    #[error("outside function domain: {0}")]
    Domain(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("surrogate model failure: {0}")]
    Surrogate(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI and mirrored by the C API.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Validation(_) | Error::Io { .. } => 2,
            Error::ResourceCap(_) => 3,
            Error::Domain(_)
            | Error::UndefinedMetric(_)
            | Error::Surrogate(_)
            | Error::Numerical(_) => 4,
        }
    }
}
