use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: expected a square matrix, got {shape:?}")]
    NotSquare { op: &'static str, shape: (usize, usize) },

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("{op}: matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { op: &'static str, deviation: f64 },

    #[error("singular matrix (pivot magnitude {pivot:e})")]
    Singular { pivot: f64 },

    #[error("inverse failed its residual check (residual {residual:e})")]
    IllConditioned { residual: f64 },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("Jacobi sweeps did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("internal error: {0}")]
    Internal(String),
}
