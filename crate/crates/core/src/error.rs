use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("audio error in {path}: {msg}")]
    Audio { path: PathBuf, msg: String },

    #[error("corrupt {what}: {msg}")]
    Corrupt { what: &'static str, msg: String },

    #[error("unsupported {what} format version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u16,
        expected: u16,
    },

    #[error("config digest mismatch: checkpoint has {found}, expected {expected}")]
    DigestMismatch { expected: String, found: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("no training data in {0}")]
    NoData(PathBuf),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
