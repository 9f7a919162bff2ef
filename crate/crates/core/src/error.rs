use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("operator has {points} points, dense oracle limit is {limit}")]
    TooLarge { points: usize, limit: usize },

    #[error("dense eigendecomposition did not converge")]
    NonConvergence,

    #[error("Chebyshev expansion not converged at degree {degree} (tail {tail:e})")]
    NonConverged { degree: usize, tail: f64 },

    #[error("dyadic system resolves |λ| <= {resolved}, spectrum reaches {needed}")]
    UnderResolved { resolved: f64, needed: f64 },

    #[error("expansion interval [{a}, {b}] does not enclose spectral range [{lo}, {hi}]")]
    IntervalMismatch { a: f64, b: f64, lo: f64, hi: f64 },

    #[error("operation is defined on three-dimensional grids only (got d = {0})")]
    NotThreeDimensional(usize),

    #[error("fit: {0}")]
    Fit(String),
}
