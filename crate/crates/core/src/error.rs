use thiserror::Error;

/// Errors raised by the library. I/O and serialization failures are kept
/// apart from domain errors so the CLI can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rank-deficient least-squares block for action {action}: rank {rank} < d = {d} (n_j = {n})")]
    RankDeficient {
        action: usize,
        rank: usize,
        d: usize,
        n: usize,
    },

    #[error("gram matrix of the support is singular")]
    SingularGram,

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("no unselected action left to choose from")]
    NoCandidates,

    #[error("support is empty")]
    EmptySupport,

    #[error("combinatorial guard exceeded: {count} subsets > limit {limit}")]
    GuardExceeded { count: u128, limit: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the filesystem or of (de)serialization.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => true,
            Error::File { source, .. } => source.is_io(),
            _ => false,
        }
    }

    /// Attaches the file a failure came from.
    pub fn at(self, path: &std::path::Path) -> Self {
        Error::File {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
