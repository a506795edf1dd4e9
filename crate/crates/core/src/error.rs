use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("propagation diverged at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("optimization diverged at iteration {iteration}: {source}")]
    OptimizerDivergence {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: expected {expected}, got {got} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index order violation: from {from} > to {to} (N = {n})")]
    IndexOrder { from: usize, to: usize, n: usize },

    #[error("relative entropy diverges: q has zero weight where p is supported")]
    InfiniteDivergence,

    #[error("no root found: {0}")]
    RootNotFound(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite, got {value}")))
    }
}
