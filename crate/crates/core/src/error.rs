use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A malformed input record, located by file and 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}:{line}: {message}")]
pub struct RecordError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Record(#[from] RecordError),

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("document `{doc_id}` has no meta field `{key}` for token counting")]
    MissingCountField { doc_id: String, key: String },

    #[error("seed corpus for language `{0}` contains no text")]
    EmptySeed(String),

    #[error("cannot classify an empty text")]
    EmptyText,

    #[error("document `{0}` has no score")]
    MissingScore(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("embedding for `{0}` has a non-finite component")]
    NonFinite(String),

    #[error("embeddings come from different embedders: `{0}` and `{1}`")]
    MixedEmbedders(String, String),

    #[error("embedder `{embedder}` failed: {message}")]
    Embedder { embedder: String, message: String },

    #[error("mean embedding distance for `{0}` is zero; its logarithm is undefined")]
    DegenerateDistance(String),

    #[error("translator protocol violation on job `{job}`: {message}")]
    Protocol { job: String, message: String },

    #[error("translation of `{job}` failed: {message}")]
    TranslationFailed { job: String, message: String },

    #[error("no source document `{0}` in the store")]
    MissingSource(String),

    #[error("source document `{0}` is already a translation")]
    AlreadyTranslated(String),

    #[error("unsupported language `{0}`")]
    UnsupportedLanguage(String),

    #[error("inventory has no pool `{0}`")]
    MissingPool(String),

    #[error("no document store for pool `{0}`")]
    MissingStore(String),

    #[error("pool `{0}` cannot realize any tokens")]
    EmptyPool(String),

    #[error("phase `{phase}` leaves {tokens} tokens unassigned; capped languages: {languages:?}")]
    Deficit {
        phase: String,
        tokens: u64,
        languages: Vec<String>,
    },

    #[error("{0}")]
    Statistics(String),

    #[error("duplicate evaluation record for ({model_id}, {lang}, {benchmark})")]
    DuplicateEval {
        model_id: String,
        lang: String,
        benchmark: String,
    },

    #[error("no evaluation records for model `{model_id}` in `{lang}`")]
    NoRecords { model_id: String, lang: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
