use thiserror::Error;

/// Errors raised by the detection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("stopping time {tau} out of range for a path of length {len}")]
    StoppingTimeOutOfRange { tau: usize, len: usize },

    #[error("loess fit needs at least {required} design points, got {got}")]
    TooFewPoints { required: usize, got: usize },

    #[error("non-finite value in loess {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("scenario sets differ: {0}")]
    ScenarioMismatch(String),

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
