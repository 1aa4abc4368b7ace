use thiserror::Error;

use crate::graph::ValidationReport;

/// Errors raised by the analysis and optimisation routines.
#[derive(Debug, Error)]
pub enum WmgError {
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },

    #[error("graph failed validation:\n{0}")]
    Invalid(ValidationReport),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("(I - P + Pi) is singular (condition estimate {cond:e})")]
    SingularFundamental { cond: f64 },

    #[error("transition matrix is reducible: node {to} is unreachable from node {from}")]
    Reducible { from: usize, to: usize },

    #[error("taboo kernel (I - P_{target}) is singular; chain is reducible")]
    SingularTaboo { target: usize },

    #[error("edge ({0}, {1}) is not in the edge set")]
    NotAnEdge(usize, usize),

    #[error("variance {value:e} at ({row}, {col}) is negative beyond round-off")]
    NegativeVariance { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("random walk from {from} did not reach {to} within {cap} steps")]
    StepCap { from: usize, to: usize, cap: u64 },
}

pub type Result<T, E = WmgError> = std::result::Result<T, E>;
