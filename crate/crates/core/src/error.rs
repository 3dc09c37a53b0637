use thiserror::Error;

use crate::solver::IterateRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Power iteration did not settle; `last` is the final Rayleigh quotient.
    #[error("spectral radius estimate did not converge after {iters} iterations (last estimate {last}, relative change {change:e})")]
    Estimation { iters: usize, last: f64, change: f64 },

    #[error("subproblem oracle failed: {0}")]
    Oracle(String),

    #[error("iterates diverged at iteration {k}: objective is not finite")]
    Diverged { k: usize, trace: Box<Vec<IterateRecord>> },

    #[error("objective increased at iteration {k}: {before} -> {after}")]
    DescentViolation {
        k: usize,
        before: f64,
        after: f64,
        trace: Box<Vec<IterateRecord>>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: &[usize], got: &[usize]) -> Self {
        Error::Shape {
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Trace recorded up to a numerical failure, if any.
    pub fn trace(&self) -> Option<&[IterateRecord]> {
        match self {
            Error::Diverged { trace, .. } | Error::DescentViolation { trace, .. } => Some(trace),
            _ => None,
        }
    }
}
