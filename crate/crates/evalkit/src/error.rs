use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no verdicts")]
    NoVerdicts,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("tier {0} out of range 0..=3")]
    TierOutOfRange(u8),
    #[error("items lack expected_lang: {}", .0.join(", "))]
    MissingExpectedLang(Vec<String>),
    #[error("invalid item {id}: {reason}")]
    InvalidItem { id: String, reason: String },
    #[error("judge failed on item {item_id}: {message}")]
    Judge { item_id: String, message: String },
    #[error("no response for item {0}")]
    MissingResponse(String),
    #[error("line {line}: {source}")]
    Line { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
