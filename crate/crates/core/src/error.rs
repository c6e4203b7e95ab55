use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tensor is not recorded on this tape")]
    Detached,

    #[error("backward already ran on this tape; record a new graph first")]
    TapeConsumed,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {x:?} lies outside the domain of `{objective}`")]
    OutOfBounds { objective: String, x: Vec<f64> },

    #[error("objective returned a non-finite value at x = {x:?}")]
    ObjectiveNaN { x: Vec<f64> },

    #[error("Cholesky factorization failed (jitter up to {jitter:e}, condition estimate {condition:e})")]
    Cholesky { jitter: f64, condition: f64 },

    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("stability condition violated: dt = {dt:e} exceeds limit {limit:e}")]
    Unstable { dt: f64, limit: f64 },

    #[error("mutual-information training diverged (estimate {0:.3} nats)")]
    TrainingDiverged(f64),

    #[error("evaluation budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
