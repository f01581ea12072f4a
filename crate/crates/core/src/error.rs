use thiserror::Error;

/// Errors raised across the identification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("interconnection has an algebraic loop through port nodes {cycle:?}")]
    CyclicInterconnection { cycle: Vec<usize> },

    #[error("non-finite value produced by {port}{}", at_step(*.step))]
    NonFinite { port: String, step: Option<usize> },

    #[error("non-finite cotangent at tape node {node}")]
    NonFiniteGradient { node: usize },

    #[error("non-finite gradient coordinate {index} (value {value})")]
    NonFiniteUpdate { index: usize, value: f64 },

    #[error("invalid structure specification: {0}")]
    InvalidStructure(String),

    #[error("channel {channel} of {signal} has zero variance")]
    DegenerateChannel { signal: String, channel: usize },

    #[error("baseline parameter {index} is zero; the regularization weight is undefined")]
    ZeroBaselineParameter { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: validation RMSE is not finite")]
    Diverged { epoch: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn at_step(step: Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            actual,
        });
    }
    Ok(())
}
