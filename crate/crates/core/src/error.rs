use std::path::PathBuf;

use thiserror::Error;

use crate::stack::Domain;

pub type Result<T, E = TomoError> = std::result::Result<T, E>;

/// Which part of an on-disk artifact failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseFailure {
    Magic,
    MissingKey,
    BadValue,
    UnknownDomain,
    Syntax,
}

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("size error: {0}")]
    Size(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("expected {expected:?} domain, got {actual:?}")]
    Domain { expected: Domain, actual: Domain },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("could only place {placed} of {requested} disks")]
    Placement { placed: usize, requested: usize },

    #[error("{path}: {kind:?}: {message}")]
    Parse {
        path: PathBuf,
        kind: ParseFailure,
        message: String,
    },

    #[error("{path}: payload holds {actual} values, header implies {expected}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("reconstruction diverged: residual grew for 3 consecutive iterations (stopped at {iteration})")]
    Divergence { iteration: usize },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TomoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TomoError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TomoError::Divergence { .. } | TomoError::NonFiniteLoss { .. }
        )
    }
}
