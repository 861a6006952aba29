use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent inputs while building a mixture, measure or prefix.
    #[error("construction error: {0}")]
    Construction(String),
    /// The x-grid is too narrow for the requested layer; `required` is a half-width that would suffice.
    #[error(
        "grid too narrow: half-width {current} leaves tail mass {tail:.3e}; use L >= {required:.2}"
    )]
    GridTooNarrow {
        current: f64,
        required: f64,
        tail: f64,
    },
    /// A time was queried that is not a stored plateau boundary.
    #[error("time {0} is not a stored boundary; re-solve with it as a split point")]
    NotABoundary(f64),
    /// An iterative method failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),
    /// A covariance block is singular (vanishing discriminant).
    #[error("degenerate covariance: {0}")]
    Degenerate(String),
    /// Evaluation point lies on an atom of a measure.
    #[error("pole: {0}")]
    Pole(String),
}

pub type Result<T> = std::result::Result<T, Error>;
