use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,
    #[error("empty subset")]
    EmptySubset,
    #[error("index {index} out of range for a sample of size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("W outside ball: norm {norm} exceeds radius {radius}")]
    WOutsideBall { norm: f64, radius: f64 },
    #[error("sign support M = {support} exceeds the enumeration cap {cap}")]
    SupportTooLarge { support: usize, cap: usize },
    #[error("q=∞ degenerate; use p>1")]
    DegenerateExponent,
    #[error(
        "precondition failed for component t = {t}: sum of squared norms {sum} < 1/q = {threshold}"
    )]
    PreconditionFailed { t: usize, sum: f64, threshold: f64 },
    #[error("index map is not one-vs-all multi-category")]
    NotMultiCategory,
    #[error("data is not unit-norm (row {row} has norm {norm})")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("class {class} has no examples")]
    EmptyClass { class: usize },
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("unsupported class for this operation: {0}")]
    UnsupportedClass(&'static str),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("config error in field `{field}`: {reason}")]
    Config { field: String, reason: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
