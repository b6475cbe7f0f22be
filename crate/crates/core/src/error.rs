use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed json: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A binary payload does not hold the number of bytes implied by its header.
    #[error("{path}: payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSizeMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("splits overlap: node {0} appears in more than one split")]
    SplitsOverlap(u64),

    /// Input data violates a structural invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("infeasible balance: {0}")]
    InfeasibleBalance(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged: non-finite loss in phase {phase} on worker {worker}")]
    Diverged { phase: u8, worker: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad input data rather than by the
    /// environment or the computation itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Json { .. }
                | Error::PayloadSizeMismatch { .. }
                | Error::SplitsOverlap(_)
                | Error::Invalid(_)
                | Error::InfeasibleBalance(_)
                | Error::ShapeMismatch(_)
        )
    }
}
