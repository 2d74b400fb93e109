use thiserror::Error;

use crate::mdp::ValidationReport;

/// Errors produced by the laboratory's core operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid {what} index {index} (bound {bound})")]
    InvalidIndex {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("MDP failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("credit sampler exhausted after {trials} trials without an accepted draw")]
    SamplerExhausted { trials: usize },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(what: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::Shape {
        what,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

pub(crate) fn param_err(name: &'static str, value: impl ToString, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value: value.to_string(),
        reason,
    }
}
