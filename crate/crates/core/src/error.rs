use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Two estimated paths produce (nearly) collinear gain-matrix columns.
    #[error("rank-deficient gain matrix: paths {first} and {second} collide (correlation {correlation:.6})")]
    RankDeficient {
        first: usize,
        second: usize,
        correlation: f64,
    },

    #[error("Levenberg-Marquardt failed after {iterations} iterations: {reason}")]
    Convergence {
        iterations: usize,
        best_residual_norm: f64,
        best_params: Vec<f64>,
        reason: String,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
