use thiserror::Error;

/// Errors produced by group operations, estimators and the pipelines built on them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("element is not on the manifold: {0}")]
    NotOnManifold(String),

    #[error("rotation angle within {tol:e} of pi, logarithm is ambiguous")]
    NearAntipode { tol: f64 },

    #[error("composite layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("normal equations are rank deficient (null space dimension {nullity})")]
    RankDeficient { nullity: usize },

    #[error("solver did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
