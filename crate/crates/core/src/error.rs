use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("detection exhausted after {found} of {requested} targets")]
    DetectionExhausted { requested: usize, found: usize },

    #[error("degenerate reference for path at delay {delay}: zero energy")]
    DegenerateReference { delay: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("path association failed: {0}")]
    Association(String),

    #[error("cluster out of range: {0}")]
    ClusterOutOfRange(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
