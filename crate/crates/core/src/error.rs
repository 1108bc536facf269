use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infinite mass in component {component}: {reason}")]
    InfiniteMass { component: String, reason: String },

    #[error("undefined integral: {0}")]
    UndefinedIntegral(String),

    #[error("truncation not supported: {0}")]
    UnsupportedTruncation(String),

    #[error("invalid transition: {0}")]
    InvalidTransition(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("generator is not lumpable: {0}")]
    NotLumpable(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("duality precondition failed: {0}")]
    DualityPrecondition(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
