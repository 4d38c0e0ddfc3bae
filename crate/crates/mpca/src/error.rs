//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MpcaError>;

#[derive(Debug, Error)]
pub enum MpcaError {
    /// A parameter violated its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// An orthogonal-polynomial basis was evaluated past its stored degree.
    #[error("basis holds coefficients for degree <= {available}, degree {requested} requested")]
    InsufficientCoefficients { requested: usize, available: usize },

    /// A metric was asked of the zero vector.
    #[error("zero vector has no direction")]
    ZeroVector,

    /// A matrix expected to have full column rank did not.
    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Enumeration or sampling budget exceeded.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// A finite-set oracle configured without replacement ran dry.
    #[error("sample oracle exhausted after {drawn} draws")]
    OracleExhausted { drawn: usize },

    /// Overflow, NaN, or rank collapse during iteration.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),
}
