use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("hypothesis violated: lambda = {lambda} must exceed nu = {nu} (nu = sum mu_j^2 gamma_j^2)")]
    LambdaNotAboveNu { lambda: f64, nu: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("path {seed} rejected: |W| = {max_abs} exceeds cap {cap}")]
    PathRejected { seed: u64, max_abs: f64, cap: f64 },

    #[error("{what} did not converge after {iters} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("linear solve breakdown: {0}")]
    Breakdown(String),

    #[error("constraint violated: residual {0:e}")]
    Infeasible(f64),

    #[error("oracle `{oracle}` does not apply to {instance}")]
    IncompatibleOracle { oracle: String, instance: String },
}

pub type Result<T> = std::result::Result<T, Error>;
