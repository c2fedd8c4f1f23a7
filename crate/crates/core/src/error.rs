use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("point ({0}, {1}) is outside the reference element")]
    OutsideReference(f64, f64),

    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("evaluation region leaves the field's domain: {0}")]
    OutsideDomain(String),

    #[error("space mismatch: {0}")]
    Mismatch(String),

    #[error("matrix is not symmetric (entry ({row}, {col}) differs by {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("singular matrix in dense solve")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;
