use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial degree must be at least 1, got {0}")]
    InvalidDegree(usize),

    #[error("degenerate interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("point {x} lies outside [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dyadic threshold alpha must be >= 1, got {0}")]
    InvalidAlpha(f64),

    #[error("mesh is not conforming: {0}")]
    NonConforming(String),

    #[error("mesh assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("structure check failed: {0}")]
    Structure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lanczos breakdown persisted after {restarts} restarts")]
    Breakdown { restarts: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
