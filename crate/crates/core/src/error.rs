use thiserror::Error;

/// Errors produced by sketch construction, the distributed layer and the
/// low-rank algorithms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("singular triangular factor at pivot {0}")]
    Singular(usize),

    #[error("input basis is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("dense factorization failed: {0}")]
    Factorization(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
