use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid bid profile: {0}")]
    InvalidBids(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bidder index {index} out of range for {len} bidders")]
    BadIndex { index: usize, len: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("LP solver failed after {iterations} iterations: {reason}")]
    LpFailure { iterations: usize, reason: String },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("bisection failed: {0}")]
    Bisection(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::LpFailure { .. } | Error::Bisection(_))
    }
}
