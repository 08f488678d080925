use thiserror::Error;

/// Errors raised by the estimators, generators and I/O helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("rank deficient input: smallest singular value {sigma_min:.3e} below tolerance {tol:.3e}")]
    RankDeficient { sigma_min: f64, tol: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("degenerate iterate at iteration {iteration}: smallest singular value {sigma_min:.3e}")]
    DegenerateIterate { iteration: usize, sigma_min: f64 },

    #[error("non-finite objective at iteration {0}")]
    NonFiniteObjective(usize),

    #[error("k-means left cluster {0} empty")]
    EmptyCluster(usize),

    #[error("sampling gave up after {0} resamples")]
    RetryExhausted(usize),

    #[error("degenerate slice {slice}: sigma_K = {sigma:.3e}")]
    DegenerateSlice { slice: usize, sigma: f64 },

    #[error("too many failed runs at grid point {grid_index}: {failed}/{total}")]
    TooManyFailures {
        grid_index: usize,
        failed: usize,
        total: usize,
    },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
