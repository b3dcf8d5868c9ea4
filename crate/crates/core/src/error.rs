use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// A constructed schedule has a last critical value at or above one.
    #[error("critical value at index {index} is {value}, must be < 1")]
    Level { index: usize, value: f64 },

    /// The first critical value collapsed to zero.
    #[error("degenerate schedule: first critical value is {0}, must be > 0")]
    DegenerateSchedule(f64),

    /// Schedule values are not non-decreasing or not in (0, 1).
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid rejection curve: {0}")]
    Curve(String),

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("length mismatch: sample has {sample} p-values, schedule has {schedule} values")]
    LengthMismatch { sample: usize, schedule: usize },

    #[error("invalid sample: {0}")]
    Sample(String),

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The operation is not valid for the requested dependence model.
    #[error("refused: {0}")]
    Refused(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_level(name: &'static str, alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(param(name, format!("{alpha} is not in (0, 1)")))
    }
}
