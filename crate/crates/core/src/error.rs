use thiserror::Error;

/// Errors raised by the fitting pipeline.
#[derive(Debug, Error)]
pub enum MewlsError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("value {value} lies outside the spline domain [0, 1]")]
    Domain { value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weighted design matrix is rank deficient (numerical rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("infeasible MSE target {target:e}: smallest squared residual is {min_residual:e}")]
    InfeasibleTarget { target: f64, min_residual: f64 },

    #[error("failed to solve for the MSE multiplier: {0}")]
    SolverFailure(String),

    #[error("no convergence after {iterations} outer iterations (target {target:e})")]
    NonConvergence {
        iterations: usize,
        target: f64,
        last: Box<crate::mewls::FitState>,
    },

    #[error("degenerate parameter: all t values are equal")]
    DegenerateParameter,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid threshold {0}: must lie in (0, 1)")]
    InvalidThreshold(f64),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MewlsError> = std::result::Result<T, E>;
