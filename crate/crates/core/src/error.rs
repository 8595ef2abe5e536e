use std::path::PathBuf;

/// Errors raised across the curation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or out-of-contract input data.
    #[error("input error: {0}")]
    Input(String),

    /// A model request that failed after exhausting its retries.
    #[error("request error for `{id}` after {attempts} attempt(s): {message}")]
    Request {
        id: String,
        attempts: u32,
        message: String,
    },

    /// A backend changed shape mid-run (e.g. embedding dimension drift).
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("judge response is neither yes nor no: {raw:?}")]
    JudgeParse { raw: String },

    #[error("trace response is not a {{\"response\": ...}} object: {raw:?}")]
    TraceParse { raw: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
