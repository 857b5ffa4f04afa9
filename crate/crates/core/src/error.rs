//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("position {position} out of range 1..={len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular covariance matrix")]
    SingularCovariance,

    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("segment too short: length {len}, need at least {min}")]
    SegmentTooShort { len: usize, min: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Config(String),
}
