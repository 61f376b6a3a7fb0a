use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A field evaluator produced a non-finite value.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// A sparse factorisation or solve failed; carries provenance so a
    /// Monte-Carlo driver can report which step of which sample broke.
    #[error("solver failure at step {step}: {detail}")]
    SolverFailure { step: usize, detail: String },

    /// Too few usable points for a rate fit; reports the detected error floor.
    #[error("insufficient data for rate fit (detected floor {floor:?})")]
    InsufficientData { floor: Option<f64> },

    /// Operation requires data the problem does not provide (e.g. an exact
    /// solution evaluator).
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
