use crate::timeseries::MonthIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("series spans do not overlap")]
    DisjointSpans,

    #[error("series length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid value in month {month}: {reason}")]
    InvalidValue { month: MonthIndex, reason: String },

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("duplicate month {month} at {path}:{line}")]
    DuplicateMonth {
        path: String,
        line: usize,
        month: MonthIndex,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible path at month {month}: {reason}")]
    InfeasiblePath { month: MonthIndex, reason: String },

    #[error("NPL is zero at month {month}: recovery share not identified")]
    ZeroNpl { month: MonthIndex },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        objective: f64,
    },

    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rank deficiency: column {0} is collinear with earlier columns")]
    RankDeficient(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Exit-code class used by the CLI: 2 input, 3 io, 4 infeasible, 5 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::CalibrationInfeasible(_) | Error::InfeasiblePath { .. } => 4,
            Error::NonConvergence { .. } | Error::Numerical(_) | Error::ZeroNpl { .. } => 5,
            _ => 2,
        }
    }
}
