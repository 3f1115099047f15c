use thiserror::Error;

/// Errors raised by the interaction driver, estimators and learners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("interface mismatch: {0}")]
    Interface(String),

    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infinite divergence: {0}")]
    InfiniteDivergence(String),

    #[error("degenerate bandwidth: all samples are identical")]
    DegenerateBandwidth,

    #[error("mixture over heterogeneous predictive variants")]
    MixedVariants,

    #[error("rollout terminated at futures step {0}")]
    RolloutTerminated(usize),

    #[error("{dropped} of {total} particles diverged numerically")]
    TooManyDroppedParticles { dropped: usize, total: usize },

    #[error("at step {time}: {source}")]
    AtStep { time: usize, source: Box<Error> },
}

impl Error {
    /// Attach the failing time index.
    pub fn at_step(self, time: usize) -> Self {
        match self {
            Error::AtStep { .. } => self,
            other => Error::AtStep { time, source: Box::new(other) },
        }
    }

    /// Strip any step annotation.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
