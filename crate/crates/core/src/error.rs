use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Smallest eigenvalue of the constraint Gram matrix fell below the floor.
    #[error("constraint Gram matrix is degenerate: smallest eigenvalue {min_eigenvalue:e} < {threshold:e}")]
    Regularity { min_eigenvalue: f64, threshold: f64 },

    #[error("Newton projection did not converge after {iterations} iterations (max |D| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("initial data violate constraint {index}: |D| = {value:e} > {tolerance:e}")]
    InitialConstraintViolation { index: usize, value: f64, tolerance: f64 },

    #[error("velocity vanishes at sample {sample} (|v|^2 = {norm_sq:e})")]
    VanishingVelocity { sample: usize, norm_sq: f64 },

    #[error("auxiliary variable e is zero")]
    ZeroEinbein,

    #[error("decay rates are complex: k = {k} <= 2 m omega = {limit}")]
    ComplexRoots { k: f64, limit: f64 },
}
