use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// Malformed input or container file.
    #[error("format error: {0}")]
    Format(String),

    /// Input parsed fine but cannot be used (e.g. every session was filtered out).
    #[error("data error: {0}")]
    Data(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True when the failure is caused by the caller's input rather than by a
    /// defect inside the library. The CLI maps these to exit code 2.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Format(_) | Error::Data(_) | Error::Usage(_) | Error::Config(_)
        )
    }
}

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
