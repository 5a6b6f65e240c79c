use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has empty support")]
    EmptySupport,

    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("weights sum to {0}, expected a positive total")]
    ZeroMass(f64),

    #[error("weights sum to {0}, expected 1 within 1e-9")]
    NotNormalized(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("Wasserstein order must satisfy p >= 1, got {0}")]
    InvalidOrder(f64),

    #[error("regularization must be positive and finite, got {0}")]
    InvalidRegularization(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("child cells must be nonempty")]
    EmptyChild,

    #[error("children do not partition the parent cell")]
    NotAPartition,

    #[error("criterion {0} does not support multivariate responses")]
    UnsupportedOutputDim(&'static str),

    #[error("treatment arm must be 0 or 1, got {0}")]
    InvalidArm(u8),

    #[error("empty {0} arm")]
    EmptyArm(&'static str),

    #[error("transport solver failed: {0}")]
    Solver(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
