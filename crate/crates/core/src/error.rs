use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input outside valid domain: {0}")]
    InputDomain(String),

    #[error("invalid depth {0} mm")]
    InvalidDepth(f64),

    #[error("size mismatch: expected {expected:?}, got {got:?}")]
    SizeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("point behind camera (z = {0})")]
    Cheirality(f64),

    #[error("rotation outside operating range (q4 = {0})")]
    RotationRange(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
