use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |A - A^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "rate undefined at unoccupied configuration {config} \
         (occupation {occupation:e} at t = {time})"
    )]
    UnoccupiedConfiguration {
        config: usize,
        occupation: f64,
        time: f64,
    },

    #[error("undefined velocity at x = {x} (t = {time}): density below node floor")]
    UndefinedVelocity { x: f64, time: f64 },

    #[error("enumeration guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("unknown builder `{0}`")]
    UnknownBuilder(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
