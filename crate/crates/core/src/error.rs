use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or input value is outside its allowed range.
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("step size violates 2*lambda*eta < 1 (lambda = {lambda}, eta = {eta})")]
    InvalidStepSize { lambda: f64, eta: f64 },

    #[error("auxiliary gradient undefined: {0}")]
    AuxUndefined(String),

    #[error("standard error undefined: {0}")]
    SeUndefined(String),

    #[error("epoch length overflow: m0 * 2^(S-1) exceeds cap {cap}")]
    EpochOverflow { cap: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid { field, reason: reason.into() }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "invalid",
            Error::Dimension { .. } => "dimension",
            Error::Empty(_) => "empty",
            Error::InvalidStepSize { .. } => "invalid_step_size",
            Error::AuxUndefined(_) => "aux_undefined",
            Error::SeUndefined(_) => "se_undefined",
            Error::EpochOverflow { .. } => "epoch_overflow",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
