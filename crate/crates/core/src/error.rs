use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("pixel ({x}, {y}) is outside the interior of a {width}x{height} image")]
    OutOfDomain {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("degenerate contour: {0}")]
    DegenerateContour(String),

    #[error("mask contains no contour")]
    NoContour,

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("{}line {line}: {message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Failure while processing one input file.
    #[error("{}: {source}", path.display())]
    AtPath { path: PathBuf, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse grouping used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::File { .. } | Error::Io(_) | Error::Codec(_) | Error::UnsupportedFormat(_) => {
                ErrorKind::Io
            }
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::AtPath { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::AtPath {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
