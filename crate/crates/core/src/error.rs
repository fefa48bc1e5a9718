use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller supplied a value that violates an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// The knowledge-graph or embedding backend could not be reached.
    #[error("transport error: {0}")]
    Transport(String),

    #[error("{path}: row {row}, field `{field}`: {message}")]
    Validation {
        path: PathBuf,
        row: usize,
        field: String,
        message: String,
    },

    #[error("entity {0} has neither an `instance of` nor a `subclass of` statement")]
    MissingClass(String),

    #[error("invalid property path: {0}")]
    PathInvalid(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
