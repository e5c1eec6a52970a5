use thiserror::Error;

use crate::beamform::BeamSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("matrix `{name}` is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { name: &'static str, min_eigenvalue: f64 },

    #[error("length mismatch: expected a multiple of {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("probability {value} at position {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error(
        "inner Lagrangian maximization is unbounded: the weighted constraint matrix does not cover the signal subspace"
    )]
    UnboundedInner,

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("dual iteration did not converge after {iterations} iterations (kkt residual {kkt_residual:e})")]
    MaxIterations {
        iterations: usize,
        kkt_residual: f64,
        best: Box<BeamSolution>,
    },

    #[error("cell {index}: {source}")]
    Cell {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
