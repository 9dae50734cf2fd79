use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error(
        "capacity exceeded: {what} needs {required_bytes} bytes but the memory cap is {cap_bytes} bytes"
    )]
    Capacity {
        what: String,
        required_bytes: u64,
        cap_bytes: u64,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("eigensolver did not converge after {restarts} restarts (max residual {max_residual:e})")]
    Convergence {
        restarts: usize,
        residuals: Vec<f64>,
        max_residual: f64,
    },

    #[error("kept eigenvectors miss a fraction {weight:e} of the initial state (bound {bound:e})")]
    Truncation { weight: f64, bound: f64 },

    #[error("integration produced non-finite values at t = {time}")]
    Integration { time: f64 },

    #[error("angle of oscillator {index} is undefined at t = {time} (zero modulus)")]
    UndefinedAngle { index: usize, time: f64 },

    #[error("{0} is undefined for a zero vector")]
    ZeroVector(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Sampling(_) => "sampling",
            Error::Capacity { .. } => "capacity",
            Error::Validation(_) => "validation",
            Error::Convergence { .. } => "convergence",
            Error::Truncation { .. } => "truncation",
            Error::Integration { .. } => "integration",
            Error::UndefinedAngle { .. } => "undefined_angle",
            Error::ZeroVector(_) => "zero_vector",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
