use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value overflowed the representable range: {0}")]
    Overflow(String),

    #[error("permanent block of size {size} exceeds the cap of {cap}; use a spectral evaluation instead")]
    PermanentCap { size: usize, cap: usize },

    #[error("subset enumeration over {len} coordinates exceeds the cap of {cap}")]
    SubsetCap { len: usize, cap: usize },

    #[error("{0} is not prime")]
    NotPrime(u64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

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

pub type Result<T> = std::result::Result<T, Error>;
