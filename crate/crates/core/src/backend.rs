//! Generation and judging contracts used by the feedback and correction loops.

use std::collections::BTreeMap;
use std::fmt;

use crate::types::{Prompt, ResponseText};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendError(pub String);

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BackendError {}

/// Produces an initial answer for a prompt.
pub trait Responder {
    fn respond(&self, prompt: &Prompt) -> Result<String, BackendError>;
}

impl<F> Responder for F
where
    F: Fn(&Prompt) -> Result<String, BackendError>,
{
    fn respond(&self, prompt: &Prompt) -> Result<String, BackendError> {
        self(prompt)
    }
}

/// Rewrites a response given critique tokens.
pub trait Refiner {
    fn refine(&self, prompt: &Prompt, response: &ResponseText, feedback: &[String]) -> Result<String, BackendError>;
}

impl<F> Refiner for F
where
    F: Fn(&Prompt, &ResponseText, &[String]) -> Result<String, BackendError>,
{
    fn refine(&self, prompt: &Prompt, response: &ResponseText, feedback: &[String]) -> Result<String, BackendError> {
        self(prompt, response, feedback)
    }
}

/// Scalar quality score for a response.
pub trait ScoreJudge {
    fn id(&self) -> &str;
    fn score(&self, prompt: &Prompt, response: &str) -> f64;
}

/// Answers from a fixed prompt-id → text table.
#[derive(Debug, Clone, Default)]
pub struct TableResponder {
    pub answers: BTreeMap<String, String>,
}

impl Responder for TableResponder {
    fn respond(&self, prompt: &Prompt) -> Result<String, BackendError> {
        self.answers
            .get(&prompt.id)
            .cloned()
            .ok_or_else(|| BackendError(format!("no answer for prompt {}", prompt.id)))
    }
}

/// Appends the critique tokens to the response.
#[derive(Debug, Clone, Copy, Default)]
pub struct AppendRefiner;

impl Refiner for AppendRefiner {
    fn refine(&self, _prompt: &Prompt, response: &ResponseText, feedback: &[String]) -> Result<String, BackendError> {
        if feedback.is_empty() {
            return Ok(response.text.clone());
        }
        Ok(format!("{} {}", response.text, feedback.join(" ")))
    }
}

/// Scores a response by its whitespace token count.
#[derive(Debug, Clone, Copy, Default)]
pub struct LengthJudge;

impl ScoreJudge for LengthJudge {
    fn id(&self) -> &str {
        "length"
    }

    fn score(&self, _prompt: &Prompt, response: &str) -> f64 {
        response.split_whitespace().count() as f64
    }
}

/// +1 for every rewarded phrase present, −1 for every penalized phrase
/// present; matching is case-insensitive substring search.
#[derive(Debug, Clone, Default)]
pub struct RubricJudge {
    pub rewarded: Vec<String>,
    pub penalized: Vec<String>,
}

impl ScoreJudge for RubricJudge {
    fn id(&self) -> &str {
        "rubric"
    }

    fn score(&self, _prompt: &Prompt, response: &str) -> f64 {
        let text = response.to_lowercase();
        let hits = |list: &[String]| list.iter().filter(|p| text.contains(&p.to_lowercase())).count() as f64;
        hits(&self.rewarded) - hits(&self.penalized)
    }
}
