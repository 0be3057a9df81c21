use std::fmt;

use thiserror::Error;

/// Pipeline stage that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fitzpatrick,
    Selfdualize,
    Solve,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Fitzpatrick => "fitzpatrick",
            Stage::Selfdualize => "selfdualize",
            Stage::Solve => "solve",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("improper function: {0}")]
    Improper(String),

    #[error("no closed-form conjugate: {0}")]
    UnsupportedConjugate(String),

    #[error("proximal map unavailable: {0}")]
    UnsupportedProx(String),

    #[error("undefined extended-real operation: {0}")]
    UndefinedArithmetic(&'static str),

    #[error("enumeration too large: {0}")]
    SizeGuard(String),

    #[error("graph is not monotone: points {i} and {j} have pairing {pairing:e}")]
    NotMonotone { i: usize, j: usize, pairing: f64 },

    #[error("hypothesis violated: {detail}")]
    Hypothesis { detail: String, node: Option<Vec<f64>> },

    #[error("numerical failure at {node:?}: {detail}")]
    Numerical { detail: String, node: Vec<f64> },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_stage(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage tag of a pipeline error, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
