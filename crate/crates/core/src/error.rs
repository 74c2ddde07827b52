use thiserror::Error;

/// Errors raised by the fogbench model and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of a model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally invalid argument (bad layout, bad configuration, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Michelson contrast with `i90 + i5 == 0`.
    #[error("contrast is undefined when both intensities are zero")]
    UndefinedContrast,

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
