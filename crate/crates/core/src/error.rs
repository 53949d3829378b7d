use thiserror::Error;

/// Errors raised by mesh handling, the linear solvers and the eigenvalue drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("triangle {triangle} has non-positive signed area {area:e}")]
    DegenerateElement { triangle: usize, area: f64 },

    #[error("iterative solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("constraint Schur complement is not positive ({value:e})")]
    SingularConstraint { value: f64 },

    #[error("boundary trace vanishes identically; thickness is undefined")]
    ZeroTrace,

    #[error("no sign change of lambda_m - lambda_N on the mass bracket [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("optimization did not converge within {steps} steps")]
    NotConverged { steps: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
