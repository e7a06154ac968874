//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum PmbmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular or not positive definite in {0}")]
    SingularMatrix(&'static str),

    #[error("matrix has eigenvalue {value:.3e} below the PSD clamp tolerance in {context}")]
    NotPositiveSemidefinite { context: &'static str, value: f64 },

    #[error("inverse-Wishart degrees of freedom {dof} too low (need > {min})")]
    DofTooLow { dof: f64, min: f64 },

    #[error("all global hypothesis weights are zero; posterior is degenerate")]
    DegeneratePosterior,

    #[error("no feasible assignment exists for the cost matrix")]
    InfeasibleAssignment,

    #[error("Newton iteration for {0} did not converge within 100 iterations")]
    NonConvergence(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("misdetection likelihood is zero; measurement model is misconfigured")]
    ZeroMisdetectionLikelihood,
}

pub type Result<T> = std::result::Result<T, PmbmError>;
