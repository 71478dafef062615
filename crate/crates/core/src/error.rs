use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the arguments was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough samples for the requested estimate or fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A state became non-finite or exceeded the configured bound.
    #[error("blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    /// The normal equations could not be solved reliably.
    #[error("ill-conditioned regression (condition number {condition:.3e}): {detail}")]
    IllConditioned { condition: f64, detail: String },

    /// Input contained NaN or infinite values.
    #[error("non-finite input: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
