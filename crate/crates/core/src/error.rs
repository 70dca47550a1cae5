use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An upstream stage handed over a value it promised never to produce.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("parameter schema mismatch: {0}")]
    Schema(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("state space too large: {0}")]
    StateSpace(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("replay holds {have} transitions, batch needs {need}")]
    InsufficientReplay { have: usize, need: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
