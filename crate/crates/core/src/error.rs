use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    /// η outside (0, 0.5): the sigmoid slope would be zero or negative.
    #[error("degenerate link: eta = {eta} must lie in (0, 0.5)")]
    DegenerateLink { eta: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    /// The bias interval implied by bound multipliers is empty, which only
    /// happens when the dual solve did not reach optimality.
    #[error("numerical inconsistency: bias interval [{low}, {high}] is empty")]
    NumericalInconsistency { low: f64, high: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
