use thiserror::Error;

/// Errors produced anywhere in the mapping pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field evaluation at {point:?} coincides with a dipole at {dipole:?}")]
    Singularity { point: [f64; 3], dipole: [f64; 3] },

    #[error("calibration model is singular: {0}")]
    SingularModel(String),

    #[error("degenerate measurement geometry: {0}")]
    DegenerateGeometry(String),

    #[error("solver did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("covariance is not positive definite after jitter reached {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("hyperparameter optimization failed from every start")]
    OptimizationFailed,

    #[error("no sample with a fresh pose (age <= {max_age} s) is available")]
    NoFreshSample { max_age: f64 },

    #[error("timestamp {t} s lies outside the pose range [{start}, {end}] s")]
    OutsidePoseRange { t: f64, start: f64, end: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
