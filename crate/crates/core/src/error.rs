use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detection, dataset, modelling and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bearing geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal is empty or too short: {0}")]
    EmptySignal(String),

    #[error("band [{low:.3}, {high:.3}] Hz does not overlap the spectrum support")]
    EmptyBand { low: f64, high: f64 },

    #[error("PDF bin edges do not match")]
    MismatchedEdges,

    #[error("not enough windows: got {got}, need at least {need}")]
    TooFewWindows { got: usize, need: usize },

    #[error("degenerate signal window: standard deviation is zero")]
    DegenerateSignal,

    #[error("feature column {column} has zero variance in the training split")]
    ZeroVariance { column: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no uncensored records available: {0}")]
    NoEvents(String),

    #[error("Cox fit diverged on coefficient {index} (value {value})")]
    Separation { index: usize, value: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }
}
