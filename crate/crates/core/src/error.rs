use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A point, matrix or bracket table does not fit the group it is used with.
    #[error("structural error: {0}")]
    Structure(String),

    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric search finished without producing a usable answer.
    #[error("calibration failure: {0}")]
    Calibration(String),

    /// Rejection sampling gave up because almost nothing was accepted.
    #[error("sampling failure: acceptance rate {rate:.2e} below {min_rate:.2e} ({context})")]
    Sampling {
        rate: f64,
        min_rate: f64,
        context: String,
    },

    /// A requested value lies outside the numeric grid of an operator.
    #[error("range error: {0}")]
    Range(String),

    /// Grid spacing too coarse for the requested mollification scale.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// The operation is not defined for this combination of inputs.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
