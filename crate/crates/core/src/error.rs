use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible edge prior: sd {sd} is below the binomial floor {floor}")]
    InfeasibleTarget { sd: f64, floor: f64 },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("all grid points failed: {0}")]
    GridFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
