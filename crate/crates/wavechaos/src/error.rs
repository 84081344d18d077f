//! Crate wide error type.
//!
//! Numerical routines return `Result<T>`; estimator noise is never an
//! error (it is reported as a standard error on the estimate), while
//! singular evaluation points, inadmissible specifications, malformed
//! configuration, and broken preconditions are.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation at a point where the requested quantity is singular or undefined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation not defined for the given noise family.
    #[error("unsupported for this noise family: {0}")]
    Unsupported(String),

    /// Specification violates an admissibility constraint.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Malformed or out-of-contract configuration input.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller supplied arguments outside an operation's stated contract.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Simulator basis does not cover the requested evaluation region.
    #[error("coverage error: {0}")]
    Coverage(String),

    /// Iterative solver exhausted its budget without meeting its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Filesystem failure while persisting results.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
