use thiserror::Error;

/// Errors raised while building meshes, assembling systems or solving them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("preconditioner is not positive definite: (z, r) = {value:e} at iteration {iteration}")]
    IndefinitePreconditioner { value: f64, iteration: usize },

    #[error("dimension {dim} exceeds the dense budget {budget}; use a coarser mesh")]
    OverBudget { dim: usize, budget: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
