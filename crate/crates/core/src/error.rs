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

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown {kind} '{name}' not present in frozen vocabulary")]
    UnknownName { kind: &'static str, name: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("degenerate vector (norm {norm:e})")]
    DegenerateVector { norm: f64 },

    #[error("rotation block is not normalized (norm {norm})")]
    UnnormalizedBlock { norm: f64 },

    #[error("jacobi svd did not converge after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("score tape is stale: recorded at version {tape}, state is at version {state}")]
    StaleTape { tape: u64, state: u64 },

    #[error("non-finite gradient in parameter group '{group}'")]
    NonFiniteGradient { group: &'static str },

    #[error("bound violated: |s({h}, {r}, {t})| = {value} exceeds 1")]
    BoundViolation {
        h: usize,
        r: usize,
        t: usize,
        value: f64,
    },

    #[error("necessary condition violated for relation {relation}: norm {value}")]
    NecessaryConditionViolation { relation: usize, value: f64 },

    #[error("spectral radius is {0}, expected 1")]
    SpectralRadius(f64),

    #[error("no valid counterexample: {0}")]
    Counterexample(String),

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("checkpoint does not match dataset: {0}")]
    CheckpointMismatch(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
