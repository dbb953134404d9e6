use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degree mismatch: expected {expected}, got {actual}")]
    DegreeMismatch { expected: u8, actual: u8 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no surface constraints intersect the cell")]
    EmptyConstraints,

    #[error("malformed packed penalty: expected {expected} reals, got {actual}")]
    MalformedPacked { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("cache format: {0}")]
    Cache(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
