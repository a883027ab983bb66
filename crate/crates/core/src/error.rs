use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("operator is singular (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    Convergence { iterations: usize, best_residual: f64 },

    #[error("linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },

    #[error("toy-model constraint ({index}) violated: {detail}")]
    Constraint { index: &'static str, detail: String },

    #[error("no root of D{which} found below K = {k}")]
    NoRoot { which: u8, k: f64 },

    #[error("evaluation too close to a pole of D{which} at lambda = {lambda}")]
    NearPole { which: u8, lambda: f64 },

    #[error("subsystem eigenvalues never cross on [{k_lo}, {k_hi}]")]
    NoBifurcation { k_lo: f64, k_hi: f64 },

    #[error("F never crosses 0.5 on the supplied K grid")]
    NoCrossing,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("experiment aborted: {failures} of {trials} trials failed ({detail})")]
    ExperimentAborted {
        failures: usize,
        trials: usize,
        detail: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
