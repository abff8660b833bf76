use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A bank or record file line failed schema or invariant validation.
    #[error("{source_name}:{line}: invalid field `{field}`: {message}")]
    Schema {
        source_name: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{source_name}: expected {expected} {what}, found {found}")]
    Cardinality {
        source_name: String,
        what: String,
        expected: String,
        found: usize,
    },

    #[error("morphology: {0}")]
    Morphology(String),

    #[error("render: {0}")]
    Render(String),

    #[error("corpus: {0}")]
    Corpus(String),

    #[error(transparent)]
    Client(#[from] crate::model_client::ClientError),

    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),

    #[error("annotation: {0}")]
    Annotation(String),

    #[error("invalid label field `{field}`: {message}")]
    InvalidLabel { field: String, message: String },

    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),

    #[error("config: {0}")]
    Config(String),

    #[error("analysis: {0}")]
    Analysis(String),

    /// An input produced by an earlier pipeline stage does not exist yet.
    #[error("missing {path}; run `corefprobe {producer}` first")]
    UpstreamMissing { path: PathBuf, producer: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        source_name: &str,
        line: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            source_name: source_name.to_string(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
