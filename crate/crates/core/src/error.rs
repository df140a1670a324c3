use thiserror::Error;

pub type Result<T, E = AlignError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("non-finite reward")]
    NonFiniteReward,
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },
    #[error("optimization diverged at step {step}")]
    OptimizationDiverged { step: usize },
    #[error("absolute continuity violated at index {index}")]
    AbsoluteContinuity { index: usize },
    #[error("policy/base support mismatch for prompt {prompt_id}")]
    SupportMismatch { prompt_id: String },
    #[error("beta must be positive")]
    NonPositiveBeta,
    #[error("unknown feedback token {0:?}")]
    UnknownFeedbackToken(String),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("backend unavailable at iteration {iteration}: {message}")]
    BackendUnavailable { iteration: usize, message: String },
    #[error("backend failed for prompt {prompt_id}: {message}")]
    BackendFailed { prompt_id: String, message: String },
    #[error("w2s cycle failed in stage {stage} of iteration {iteration}: {source}")]
    Cycle {
        stage: &'static str,
        iteration: usize,
        #[source]
        source: Box<AlignError>,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error at line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl AlignError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AlignError::Invalid(msg.into())
    }
}

impl From<serde_json::Error> for AlignError {
    fn from(source: serde_json::Error) -> Self {
        AlignError::Json { line: 0, source }
    }
}
