use thiserror::Error;

/// Errors raised by the numerical pipelines.
///
/// Hypothesis violations are kept distinct from numerical failures so that
/// callers (the CLI in particular) can tell "outside the theory" apart from
/// "the solver broke".
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("hypothesis {id} violated: {detail}")]
    Hypothesis { id: &'static str, detail: String },

    #[error("pole at t = {t} (horizon {horizon})")]
    Pole { t: f64, horizon: f64 },

    #[error("time step {step} failed: {reason}")]
    StepFailure { step: usize, reason: String },

    #[error("no convergence after {iterations} iterations (last estimate {last})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("conjugate-residual breakdown at iteration {iteration}: {reason}")]
    CgBreakdown { iteration: usize, reason: String },

    #[error("non-finite input data: {0}")]
    Data(String),

    #[error("weight construction failed: {0}")]
    Construction(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// True when the error signals that the inputs lie outside the stated
    /// hypotheses rather than a numerical failure.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            Error::Hypothesis { .. }
                | Error::Precondition(_)
                | Error::Unsupported(_)
                | Error::Parameter { .. }
                | Error::InvalidCoefficient(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
