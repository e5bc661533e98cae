use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside the operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    /// An iterative sub-solver hit its iteration cap. `residual` is the
    /// optimality measure it had reached.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    SolverFailure {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Something that the mathematics says cannot happen did happen.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wrap a sub-solver error with the name of the step that produced it.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips annotation layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Annotated { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(self.root(), Error::SolverFailure { .. } | Error::Invariant(_))
    }
}
