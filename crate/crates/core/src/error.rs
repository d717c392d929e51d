use thiserror::Error;

pub type Result<T> = std::result::Result<T, FmdsError>;

#[derive(Debug, Error)]
pub enum FmdsError {
    #[error("invalid domain: lower bound {lo} must be below upper bound {hi}")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("t = {t} is outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("matrix is not orthogonal (‖ΓᵀΓ − I‖_F = {0:e})")]
    NonOrthogonal(f64),

    #[error("singular system while computing the Cayley step")]
    SingularSystem,

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
