use thiserror::Error;

/// Errors produced anywhere in the training pipeline.
#[derive(Debug, Error)]
pub enum KaeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("eigenvector matrix is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("conjugate pairing violated: {0}")]
    Pairing(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("rank deficient: singular value {value:e} at index {index} is below the cutoff; try a smaller rank")]
    RankDeficient { index: usize, value: f64 },

    #[error("malformed file at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged at epoch {epoch}: loss {loss:e} exceeds limit {limit:e}")]
    Divergence { epoch: usize, loss: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = KaeError> = std::result::Result<T, E>;
