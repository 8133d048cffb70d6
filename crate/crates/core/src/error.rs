use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// `step` is 1-based: the index of the block whose update failed.
    #[error("singular update at step {step}: accumulated Gram matrix is not positive definite")]
    SingularUpdate { step: usize },

    #[error("singular normal matrix")]
    SingularSystem,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid interleave schedule: m = {0} must be even and at least 2")]
    InvalidSchedule(usize),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("alpha estimation failed: every grid candidate produced a singular update")]
    EstimationFailed,

    #[error("data quality: {failed} of {total} Monte Carlo iterations failed (limit 1%)")]
    DataQuality { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
