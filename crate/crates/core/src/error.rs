use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("grid misaligned: {0}")]
    GridAlignment(String),

    #[error("delay lookups off the grid at {} entries (first j={}, l={})", .0.len(), .0[0].0, .0[0].1)]
    AlignmentViolations(Vec<(usize, usize)>),

    #[error("point {point:?} lies outside the declared domain")]
    Domain { point: Vec<f64> },

    #[error("non-finite state at step {step} (t={t})")]
    NonFinite { step: usize, t: f64 },

    #[error("no real root: {0}")]
    NoRealRoot(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the supplied input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::NoRealRoot(_) | Error::Convergence(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
