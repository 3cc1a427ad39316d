use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid caller-supplied configuration or arguments.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Bounds with `lower >= upper` in some coordinate, or a point outside
    /// the box it was declared to live in.
    #[error("bounds violation: {0}")]
    Bounds(String),

    /// Rejection sampling exhausted its proposal budget without producing
    /// enough points that satisfy the named filter.
    #[error("rejection budget exhausted after {budget} proposals (filter: {filter})")]
    RejectionBudget { filter: String, budget: usize },

    /// A matrix factorization failed even after diagonal regularization was
    /// escalated to its cap.
    #[error("{context}: factorization failed (order {order}, final regularization {reg:.3e})")]
    Factorization {
        context: &'static str,
        order: usize,
        reg: f64,
    },

    /// Gaussian-process hyperparameter training failed for every restart.
    #[error("surrogate training failed: {0}")]
    Training(String),

    /// The eigenvalue routine did not converge.
    #[error("symmetric eigendecomposition failed (LAPACK info = {0})")]
    Eigen(i32),

    /// A benchmark problem evaluation reported a failure.
    #[error("problem evaluation failed: {0}")]
    Evaluation(String),

    #[error("unknown problem {name:?}; available: {available}")]
    UnknownProblem { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
