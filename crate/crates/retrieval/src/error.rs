use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate document id: {0}")]
    DuplicateId(String),
    #[error("document not in index: {0}")]
    UnknownDocument(String),
    #[error("document {0} has empty text")]
    EmptyText(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unsupported index format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("corpus line {line}: {source}")]
    Corpus { line: usize, source: serde_json::Error },
    #[error("external search failed: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;
