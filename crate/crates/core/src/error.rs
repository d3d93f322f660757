use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("basis too small: N = {0}, need N >= 1")]
    BasisTooSmall(usize),
    #[error("truncation overflow: tail mass {tail:e} exceeds {threshold:e}")]
    TruncationOverflow { tail: f64, threshold: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("outcome has vanishing probability ({0:e})")]
    DegenerateOutcome(f64),
    #[error("uncertainty relation violated: VxVp - Cxp^2 = {det:e} < hbar^2/4")]
    UncertaintyViolation { det: f64 },
    #[error("integration step too large: {monitor} = {value:e} at t = {time}")]
    StepTooLarge {
        monitor: &'static str,
        value: f64,
        time: f64,
    },
    #[error("trajectory diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("{source} at t = {time}")]
    AtTime { time: f64, source: alloc::boxed::Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidParameter { name, reason }
    }

    pub(crate) fn at(self, time: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime {
                time,
                source: alloc::boxed::Box::new(e),
            },
        }
    }

    /// Strips any attached time stamp.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::TruncationOverflow { .. }
                | Error::StepTooLarge { .. }
                | Error::Divergence { .. }
                | Error::DegenerateOutcome(_)
        )
    }
}
