use thiserror::Error;

/// Errors raised by parameter validation and the library operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("singular basis: {0}")]
    SingularBasis(String),

    #[error("dimension {found} exceeds the supported maximum {max}")]
    Dimension { found: usize, max: usize },

    #[error("sample budget {budget} is smaller than the required {required}")]
    Budget { budget: u64, required: u64 },

    #[error("no qualifying random string among {tested} candidates")]
    NotFound { tested: usize },

    #[error("unknown algorithm or preset `{0}`")]
    UnknownAlgorithm(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
