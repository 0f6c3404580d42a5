use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A tuning parameter out of its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Requested resolution exceeds the supported depth caps.
    #[error("resource error: {0}")]
    Resource(String),
    /// A construction failed its own post-condition. Always a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Domain(format!("malformed json: {e}"))
    }
}
