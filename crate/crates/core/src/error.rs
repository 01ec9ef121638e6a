use thiserror::Error;

/// Errors raised by the segmented-regression engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Shapes or index ranges do not line up (length mismatch, empty interval, ...).
    #[error("structural error: {0}")]
    Structural(String),
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Input data violates a dataset invariant (non-finite values, zero rows, unsorted rows).
    #[error("invalid data: {0}")]
    InvalidData(String),
    /// The interval error table would exceed the configured memory cap.
    #[error("error table for n={n} exceeds the cap of {cap} rows; use the streaming DP instead")]
    Capacity { n: usize, cap: usize },
    /// A Sherman-Morrison update hit a vanishing denominator.
    #[error("singular rank-one update (denominator {0:e})")]
    SingularUpdate(f64),
    /// A Gram matrix could not be factorized.
    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,
    /// Reading or writing a file failed.
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}

pub(crate) fn parameter(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
