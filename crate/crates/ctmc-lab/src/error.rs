use thiserror::Error;

/// Error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("inverted time interval: expected {lo} <= {hi}")]
    InvertedInterval { lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("state {state} unreachable at t={t}: p_t = 0")]
    UnreachableState { state: usize, t: f64 },

    #[error("singular score at state {state}: p_t = 0")]
    SingularScore { state: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
