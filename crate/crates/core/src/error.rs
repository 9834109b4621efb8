use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("point {index} at ({x}, {y}) lies outside the mesh")]
    Location { index: usize, x: f64, y: f64 },
    #[error("matrix is not positive definite (pivot {pivot}){context}")]
    NotPositiveDefinite { pivot: usize, context: String },
    #[error("Newton iteration did not converge after {iterations} steps (gradient norm {gradient_norm:e})")]
    Convergence { iterations: usize, gradient_norm: f64 },
    #[error("hyperparameter optimization failed: {0}")]
    Optimization(String),
    #[error("design error: {0}")]
    Design(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Attaches the hyperparameter vector to a factorization failure.
    pub fn with_theta(self, theta: &[f64]) -> Self {
        match self {
            Error::NotPositiveDefinite { pivot, .. } => Error::NotPositiveDefinite {
                pivot,
                context: format!(" at theta = {theta:?}"),
            },
            other => other,
        }
    }

    /// True for errors that stem from numerics rather than inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::Convergence { .. } | Error::Optimization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
