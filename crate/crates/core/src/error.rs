use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the phase-inference pipeline and its analysis tools.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate {kind} identifier: {id}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("ragged input at line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty result: {0}")]
    Empty(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {stage} at epoch {epoch}")]
    NonFinite { stage: &'static str, epoch: usize },

    #[error("reference protein {id} {reason}")]
    Reference { id: String, reason: &'static str },

    #[error("unlabeled samples: {}", .0.join(","))]
    Unlabeled(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::Ragged { .. } => "ragged",
            Error::Empty(_) => "empty",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite { .. } => "non_finite",
            Error::Reference { .. } => "reference",
            Error::Unlabeled(_) => "unlabeled",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
