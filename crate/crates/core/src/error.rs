use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("run diverged at iteration {iteration}: objective is not finite")]
    Diverged { iteration: usize },

    #[error("invalid label {value} for {loss}")]
    InvalidLabel { value: f64, loss: &'static str },

    #[error("squared loss needs finite clipping thresholds to bound sensitivity")]
    MissingClipping,

    #[error("no bracket found while solving for {what}")]
    NoBracket { what: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
