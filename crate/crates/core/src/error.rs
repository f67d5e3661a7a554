use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty fixation set")]
    EmptyFixations,
    #[error("zero-variance input to {0}")]
    ZeroVariance(&'static str),
    #[error("map sums to zero and cannot be normalized")]
    ZeroMass,
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("image `{image}`, condition `{condition}`: {source}")]
    Experiment {
        image: String,
        condition: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }
}
