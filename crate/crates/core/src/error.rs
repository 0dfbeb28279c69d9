use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the search engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{primitive}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        primitive: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{primitive}: {reason}")]
    InvalidInput {
        primitive: &'static str,
        reason: String,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("tape has already been consumed by a backward pass")]
    TapeConsumed,
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{0}")]
    Config(String),
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown operation '{name}', expected one of: {valid}")]
    UnknownOp { name: String, valid: String },
    #[error("invalid edge ({j}, {k})")]
    InvalidEdge { j: usize, k: usize },
    #[error("empty data stream")]
    EmptyData,
    #[error("{0}")]
    Infeasible(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(primitive: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            primitive,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
