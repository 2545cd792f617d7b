use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("rejected state: {0}")]
    RejectedState(String),

    #[error("generation failed after {attempts} attempts: {constraint}")]
    GenerationFailure { constraint: String, attempts: usize },

    #[error("non-finite value at layer {layer} ({context})")]
    NumericalFailure { layer: usize, context: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from caller-supplied input rather than a runtime fault.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidSpec(_)
                | Error::InvalidInput(_)
                | Error::RejectedState(_)
                | Error::Format(_)
        )
    }
}
