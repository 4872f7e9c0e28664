use thiserror::Error;

/// Errors raised by the estimators and their numerical building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("could not bracket a root: {0}")]
    Bracket(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("all columns of the design are degenerate")]
    AllColumnsDegenerate,

    #[error("every candidate failed: {0}")]
    NoCandidate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
