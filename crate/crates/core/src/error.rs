use std::path::PathBuf;

use thiserror::Error;

use crate::bandit::BoundReport;

/// Which transition kernel of a restless chain an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Active,
    Passive,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::Active => f.write_str("active"),
            KernelKind::Passive => f.write_str("passive"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid frame mismatch: {left} vs {right}")]
    FrameMismatch { left: String, right: String },

    #[error("{kernel} kernel is not row-stochastic: row {row} sums to {sum}")]
    NotStochastic { kernel: KernelKind, row: usize, sum: f64 },

    #[error("{kernel} kernel is reducible")]
    ReducibleKernel { kernel: KernelKind },

    #[error("{kernel} kernel is periodic with period {period}")]
    PeriodicKernel { kernel: KernelKind, period: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    BoundViolation(BoundReport),

    #[error("scenario hash mismatch: {expected} vs {found}")]
    HashMismatch { expected: String, found: String },

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("slot {slot}: {source}")]
    Slot {
        slot: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_slot(self, slot: u64) -> Self {
        match self {
            e @ Error::Slot { .. } => e,
            other => Error::Slot {
                slot,
                source: Box::new(other),
            },
        }
    }

    /// Strips slot context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Slot { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
