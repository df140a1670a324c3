use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("missing config key {0}")]
    Missing(&'static str),
    #[error("unsupported config version {0}")]
    Version(String),
    #[error("rule {rule}: {message}")]
    Rule { rule: String, message: String },
    #[error("unknown tool {0}")]
    UnknownTool(String),
    #[error("refusal template {id} trips rule {rule}")]
    TemplateTripsRule { id: String, rule: String },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

/// A failure inside `run_pipeline`, labelled with the stage it came from.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, message: impl Into<String>) -> Self {
        PipelineError { stage, message: message.into() }
    }
}
