//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or evaluation point lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Newton iteration failed to reach the requested residual.
    #[error("Newton iteration did not converge: residual {residual:.3e} after {iterations} iterations ({reason})")]
    Convergence {
        reason: String,
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    /// The discrete Hessian stopped being positive definite.
    #[error("discrete Hessian lost positive definiteness at node {node} (iteration {iteration})")]
    Convexity { node: usize, iteration: usize },

    /// Normal equations of a least-squares fit are too badly conditioned.
    #[error("ill-conditioned fit (condition number {condition:.3e}); use a wider radius range")]
    IllConditioned { condition: f64 },

    /// An iterative or direct linear solve failed.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
