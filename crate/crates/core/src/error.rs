use thiserror::Error;

/// Errors raised by model construction, truncation, noise generation,
/// integration and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing constant `{0}` for the selected assumption")]
    MissingConstant(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
