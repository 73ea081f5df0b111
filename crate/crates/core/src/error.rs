use std::fmt;

use crate::suffix::Suffix;

/// Errors shared by the model, the oracle and the learners.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("policy undefined at step {step} for history {history}")]
    PolicyUndefined { step: usize, history: String },

    #[error("{what}: enumeration size {size:.3e} exceeds cap {cap}")]
    CapExceeded { what: &'static str, size: f64, cap: usize },

    #[error("model is not {memory}-step decodable: suffix {witness} is reachable from states {states:?}")]
    NotDecodable { memory: usize, witness: Suffix, states: Vec<usize> },

    #[error("operation requires a ground-truth decoder but the model has none")]
    MissingDecoder,

    #[error("table undefined at step {step} for suffix {suffix}")]
    UndefinedEntry { step: usize, suffix: Suffix },

    #[error("empty confidence set at epoch {epoch} (beta = {beta})")]
    EmptyConfidenceSet { epoch: usize, beta: f64 },

    #[error("generator gave up after {retries} retries: {reason}")]
    RetriesExhausted { retries: usize, reason: String },

    #[error("construction check failed: {0}")]
    Construction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Formats an observable history as `o1 a1 o2 ...` for error messages.
pub(crate) struct HistoryDisplay<'a> {
    pub obs: &'a [usize],
    pub actions: &'a [usize],
}

impl fmt::Display for HistoryDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, o) in self.obs.iter().enumerate() {
            if i > 0 {
                write!(f, ", a{}, ", self.actions[i - 1])?;
            }
            write!(f, "o{o}")?;
        }
        write!(f, ")")
    }
}
