//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by ingestion, fitting, classification and prediction.
///
/// Every variant maps to a stable upper-case tag via [`Error::code`], which is
/// what diagnostics files and the CLI print.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("cumulative counts decrease at index {index}")]
    NonMonotone { index: usize },

    #[error("time stamps must be strictly increasing and non-negative (index {index})")]
    BadTimeAxis { index: usize },

    #[error("non-finite observation at index {index}")]
    NonFinite { index: usize },

    #[error("series has {len} observations, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("total_views {total} disagrees with last observation {last}")]
    TotalMismatch { total: u64, last: f64 },

    #[error("negative increment {value} at index {index}")]
    NegativeIncrement { index: usize, value: f64 },

    #[error("last observation has zero views")]
    DegenerateZeroViews,

    #[error("last observation has zero age")]
    DegenerateZeroAge,

    #[error("initial value must be positive for {kind}")]
    SingularParams { kind: &'static str },

    #[error("state {value} outside the domain of the {kind} equation")]
    DomainError { kind: &'static str, value: f64 },

    #[error("observations have zero variance")]
    ZeroVariance,

    #[error("non-finite residual or jacobian at the initial point")]
    BadInitialPoint,

    #[error("length mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },

    #[error("need more observations than parameters (n = {n}, p = {p})")]
    InsufficientDf { n: usize, p: usize },

    #[error("series has {len} observations, classification needs at least {min}")]
    TooShortForClassification { len: usize, min: usize },

    #[error("no candidate fits supplied")]
    NoCandidates,

    #[error("no suffix of the series is linear within tolerance")]
    NoLinearTail,

    #[error("no observations after the split point")]
    EmptyFuture,

    #[error("no record satisfies the scenario requirements")]
    NoEligibleRecords,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable diagnostic tag.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Io(_) => "IO_ERROR",
            Error::NonMonotone { .. } => "NON_MONOTONE",
            Error::BadTimeAxis { .. } => "BAD_TIME_AXIS",
            Error::NonFinite { .. } => "NON_FINITE",
            Error::TooShort { .. } => "TOO_SHORT",
            Error::TotalMismatch { .. } => "TOTAL_MISMATCH",
            Error::NegativeIncrement { .. } => "NEGATIVE_INCREMENT",
            Error::DegenerateZeroViews => "DEGENERATE_ZERO_VIEWS",
            Error::DegenerateZeroAge => "DEGENERATE_ZERO_AGE",
            Error::SingularParams { .. } => "SINGULAR_PARAMS",
            Error::DomainError { .. } => "DOMAIN_ERROR",
            Error::ZeroVariance => "ZERO_VARIANCE",
            Error::BadInitialPoint => "BAD_INITIAL_POINT",
            Error::Shape { .. } => "SHAPE_ERROR",
            Error::InsufficientDf { .. } => "INSUFFICIENT_DF",
            Error::TooShortForClassification { .. } => "TOO_SHORT_FOR_CLASSIFICATION",
            Error::NoCandidates => "NO_CANDIDATES",
            Error::NoLinearTail => "NO_LINEAR_TAIL",
            Error::EmptyFuture => "EMPTY_FUTURE",
            Error::NoEligibleRecords => "NO_ELIGIBLE_RECORDS",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
