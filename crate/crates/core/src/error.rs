use thiserror::Error;

/// Errors surfaced by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
