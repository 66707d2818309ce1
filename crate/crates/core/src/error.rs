use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: u64,
        column: usize,
        message: String,
    },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: u64, expected: usize, found: usize },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series too short: need {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("insufficient points: {0}")]
    InsufficientPoints(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("negative histogram entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("integration diverged at step {step}")]
    Divergence { step: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("channel {channel}: {source}")]
    Channel {
        channel: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::Numerical(_) => true,
            Error::Channel { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_channel(self, channel: usize) -> Error {
        Error::Channel {
            channel,
            source: Box::new(self),
        }
    }
}
