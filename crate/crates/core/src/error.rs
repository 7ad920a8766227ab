//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Input is valid but degenerate for the requested operation
    /// (e.g. zero-variance data handed to a PCA fit).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A data file could not be ingested; the message names the
    /// offending row or column.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// The experiment configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative kernel failed to converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A protocol step failed; `step` is the Algorithm-1 step number.
    #[error("pipeline step {step} failed: {source}")]
    PipelineStep {
        step: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Ingestion(e.to_string())
    }
}

impl Error {
    /// Wrap an error with the protocol step it occurred in.
    pub fn at_step(self, step: u8) -> Self {
        Error::PipelineStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
