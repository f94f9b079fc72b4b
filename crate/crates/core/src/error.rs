use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("initial covariance is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("integration diverged at grid index {index}")]
    Diverged { index: usize },

    #[error("no convergence after {iterations} steps (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("covariance at grid index {index} is singular or ill-conditioned (condition number {condition:e})")]
    SingularCovariance { index: usize, condition: f64 },

    #[error("singular linear system (zero pivot at row {row})")]
    SingularSystem { row: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("path {path}: {source}")]
    Path {
        path: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
