use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown intersection `{0}`")]
    UnknownIntersection(String),

    #[error("proportions at `{cell}` sum to {sum}, expected 1")]
    NotNormalized { cell: String, sum: f64 },

    #[error("network does not drain within the horizon cap of {h_max} intervals")]
    HorizonExceeded { h_max: usize },

    #[error("linear program is infeasible at horizon {horizon}")]
    Infeasible { horizon: usize },

    #[error("LP solver failure: {0}")]
    NumericalFailure(String),

    #[error("false-positive rate {rate} lies outside the characteristic domain [{min}, {max}]")]
    RateOutOfDomain { rate: f64, min: f64, max: f64 },

    #[error("search needs {required} evaluations, above the cap of {cap}")]
    EvaluationCapExceeded { cap: u64, required: u64 },

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),

    #[error("covariance is not positive definite even after jitter escalation")]
    NonPositiveDefinite,

    #[error("stream misaligned: {0}")]
    Misaligned(String),

    #[error("window dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("tamper magnitude {magnitude} exceeds the {available_s:.1} s of green that can be moved")]
    MagnitudeTooLarge { magnitude: f64, available_s: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<LpError> for Error {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible => Error::Infeasible { horizon: 0 },
            LpError::Unbounded => Error::NumericalFailure("unbounded LP".into()),
            LpError::NumericalFailure(m) => Error::NumericalFailure(m),
        }
    }
}

impl Error {
    /// Process exit code for command-line tools: 2 for bad input, 3 for
    /// solver or numerical failures, 4 when a search cap is exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::HorizonExceeded { .. }
            | Error::Infeasible { .. }
            | Error::NumericalFailure(_)
            | Error::NonPositiveDefinite => 3,
            Error::EvaluationCapExceeded { .. } => 4,
            _ => 2,
        }
    }

    /// Short stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidNetwork(_) => "invalid-network",
            Error::InvalidInput(_) => "invalid-input",
            Error::Parse(_) => "parse",
            Error::UnknownIntersection(_) => "unknown-intersection",
            Error::NotNormalized { .. } => "not-normalized",
            Error::HorizonExceeded { .. } => "horizon-exceeded",
            Error::Infeasible { .. } => "infeasible",
            Error::NumericalFailure(_) => "numerical-failure",
            Error::RateOutOfDomain { .. } => "rate-out-of-domain",
            Error::EvaluationCapExceeded { .. } => "evaluation-cap-exceeded",
            Error::InsufficientData(_) => "insufficient-data",
            Error::DegenerateTrace(_) => "degenerate-trace",
            Error::NonPositiveDefinite => "non-positive-definite",
            Error::Misaligned(_) => "misaligned",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::MagnitudeTooLarge { .. } => "magnitude-too-large",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
