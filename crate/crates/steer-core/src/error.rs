use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("trace is {0}, expected 1")]
    InvalidTrace(f64),

    #[error("transformation is not orthogonal (max deviation {0:.3e})")]
    InvalidTransform(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported POVM: {0}")]
    UnsupportedPovm(String),

    #[error("POVM construction failed: effect has negative eigenvalue {min_eigenvalue:.3e}")]
    ConstructionFailed { min_eigenvalue: f64 },

    #[error("all rescaling variances vanish; the reduced state is pure")]
    DegenerateVariance,

    #[error("chain state numerically singular (min eigenvalue {0:.3e}); repair required")]
    ChainRepair(f64),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
