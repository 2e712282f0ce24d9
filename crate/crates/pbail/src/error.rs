//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the public API.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor or network shapes are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A differentiation request violated the tape contract.
    #[error("autodiff contract violation: {0}")]
    Autodiff(String),

    /// A probability table or distribution failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// An environment was driven outside its contract.
    #[error("environment misuse: {0}")]
    Env(String),

    /// Dataset construction or labeling failed.
    #[error("data error: {0}")]
    Data(String),

    /// A statistic is undefined for the given input.
    #[error("undefined statistic: {0}")]
    Undefined(String),

    /// Configuration rejected.
    #[error("config error: {0}")]
    Config(String),

    /// Training could not proceed.
    #[error("training error: {0}")]
    Train(String),

    /// A binary artifact failed to parse or round-trip.
    #[error("format error: {0}")]
    Format(String),

    /// A pipeline stage failed; the message names the stage.
    #[error("stage {stage}: {source}")]
    Pipeline {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
