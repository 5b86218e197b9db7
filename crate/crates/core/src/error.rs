use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("header is missing schema column `{0}`")]
    MissingColumn(String),

    #[error("duplicate header column `{0}`")]
    DuplicateColumn(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("category `{value}` is not in the vocabulary of `{feature}`")]
    OutOfVocabulary { feature: String, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("singular least-squares system: {0}")]
    Singular(String),

    #[error("too many features for exact enumeration: {features} > {limit}")]
    TooManyFeatures { features: usize, limit: usize },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("model bundle error: {0}")]
    Bundle(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("{0}")]
    Guard(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
