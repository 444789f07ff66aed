use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("field belongs to a different grid")]
    GridMismatch,

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-positive value in {what} at node {node}: {value}")]
    NonPositive {
        what: String,
        node: usize,
        value: f64,
    },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("no positive steady state guaranteed: {0}")]
    NoPositiveSteadyState(String),

    #[error("{method} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("order violation: {0}")]
    OrderViolation(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
