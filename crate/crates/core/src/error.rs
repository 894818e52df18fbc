use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions, rates or step sizes.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computed quantity left its physically allowed range.
    #[error("numerical integrity error: {0}")]
    NumericalIntegrity(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
