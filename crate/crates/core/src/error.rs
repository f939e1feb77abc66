use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 1, got {0}")]
    InvalidDimension(usize),

    #[error("decision vector has non-finite entry at index {index}")]
    NonFiniteDecision { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("smoothing radius {mu:e} is not a positive normal float")]
    SmoothingTooSmall { mu: f64 },

    #[error("gradient estimate has non-finite coordinate {index}")]
    NonFiniteEstimate { index: usize },

    #[error("no past samples; caller must use initial c0")]
    EmptyHistory,

    #[error("weight vector has {weights} entries but history has {history}")]
    LengthMismatch { weights: usize, history: usize },

    #[error("run configured for {configured} but {requested} was requested")]
    MethodMismatch {
        configured: &'static str,
        requested: &'static str,
    },

    #[error("environment failure: {0}")]
    Environment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
