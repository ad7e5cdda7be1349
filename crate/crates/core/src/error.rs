//! Error taxonomy shared by the whole crate.
//!
//! Variants map onto process exit codes in the CLI: config/usage/shape
//! problems exit 2, numeric/training failures exit 3, I/O failures exit 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or grid extents do not line up.
    #[error("dimension error: {0}")]
    Dim(String),

    /// Token or codebook index out of range.
    #[error("index error: {0}")]
    Index(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// API contract violated by the caller (e.g. non-scalar loss).
    #[error("contract error: {0}")]
    Contract(String),

    /// Non-finite value or impossible probability encountered.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged.
    #[error("training error: {0}")]
    Training(String),

    /// Command-line usage problem.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// File exists but its contents are not what the format requires.
    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    /// Exit code the CLI should terminate with for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dim(_)
            | Error::Index(_)
            | Error::Config(_)
            | Error::Contract(_)
            | Error::Usage(_) => 2,
            Error::Numeric(_) | Error::Training(_) => 3,
            Error::Io(_) | Error::Format { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
