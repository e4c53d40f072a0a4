use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::{DocId, SnippetId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown document {0}")]
    UnknownDocument(DocId),
    #[error("unknown snippet {snippet} in document {doc}")]
    UnknownSnippet { doc: DocId, snippet: SnippetId },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("parameter shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid corpus record on line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("training diverged at epoch {epoch} on question {question}: {detail}")]
    Divergence {
        epoch: usize,
        question: String,
        detail: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
