use std::path::PathBuf;

use thiserror::Error;

use crate::fom::IterationTrace;

/// Errors produced by the reduced-order modelling toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A factorization met a (numerically) zero pivot.
    #[error("singular system: pivot for column {column} is numerically zero")]
    Singular { column: usize },

    #[error("newton iteration did not converge after {} iterations (last residual {:e})", .trace.iterations(), .trace.last_residual())]
    Divergence { trace: Box<IterationTrace> },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("assembly error in element {element}: {reason}")]
    Assembly { element: usize, reason: String },

    #[error("snapshot set is empty")]
    EmptySnapshots,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("malformed matrix file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// Wraps an error with the campaign location it came from.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for divergence and singular-system failures.
    pub fn is_numerical(&self) -> bool {
        matches!(self.root(), Error::Singular { .. } | Error::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
