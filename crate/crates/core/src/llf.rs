//! Learning from language feedback.
//!
//! A critique model `P_Φ(c | x, y)` is trained by minimizing the mean
//! cross-entropy of feedback sequences, then used inside a
//! generate → critique → refine loop that keeps only strict improvements
//! as preference pairs.

use serde::{Deserialize, Serialize};

use crate::backend::{Refiner, Responder, ScoreJudge};
use crate::error::{AlignError, Result};
use crate::seqmodel::{Conditioning, SeqModel, SeqModelConfig, TrainingSequence, Vocab};
use crate::types::{PreferencePair, Prompt, Provenance, ResponseText};

/// One `(x_i, y_i, c_i)` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub prompt: Prompt,
    pub response: ResponseText,
    pub feedback: Vec<String>,
}

impl FeedbackRecord {
    pub fn validate(&self) -> Result<()> {
        if self.feedback.is_empty() {
            return Err(AlignError::invalid(format!("empty feedback for response {}", self.response.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackModel {
    pub model: SeqModel,
}

impl FeedbackModel {
    pub fn uniform(vocab: Vocab) -> Self {
        FeedbackModel { model: SeqModel::uniform(vocab, SeqModelConfig::default()) }
    }

    fn bucket(&self, prompt: &Prompt, response: &ResponseText) -> u64 {
        self.model.bucket(&[&prompt.text, &response.text])
    }

    pub fn conditioning(&self, prompt: &Prompt, response: &ResponseText) -> Conditioning<'static> {
        Conditioning { bucket: self.bucket(prompt, response), source: None }
    }

    /// `ln P_Φ(c | x, y)`.
    pub fn log_prob(&self, record: &FeedbackRecord) -> Result<f64> {
        self.model
            .log_prob(self.conditioning(&record.prompt, &record.response), &record.feedback)
            .map_err(|e| match e {
                AlignError::UnknownToken(t) => AlignError::UnknownFeedbackToken(t),
                other => other,
            })
    }
}

/// `L_Φ = −mean ln P_Φ(c_i | x_i, y_i)`.
pub fn feedback_loss(model: &FeedbackModel, dataset: &[FeedbackRecord]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let mut total = 0.0;
    for r in dataset {
        total -= model.log_prob(r)?;
    }
    Ok(total / dataset.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackTrainConfig {
    pub alpha: f64,
    pub seed: u64,
    pub max_len: usize,
}

impl Default for FeedbackTrainConfig {
    fn default() -> Self {
        FeedbackTrainConfig { alpha: 0.1, seed: 0, max_len: 32 }
    }
}

/// Smoothed maximum likelihood; the vocabulary is every feedback token in
/// first-seen order after the reserved end token.
pub fn train_feedback_model(dataset: &[FeedbackRecord], config: &FeedbackTrainConfig) -> Result<FeedbackModel> {
    if dataset.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    for r in dataset {
        r.validate()?;
    }
    let vocab = Vocab::new(dataset.iter().flat_map(|r| r.feedback.iter()));
    let seq_config = SeqModelConfig { alpha: config.alpha, max_len: config.max_len, ..Default::default() };
    let probe = SeqModel::uniform(vocab.clone(), seq_config);
    let seqs: Vec<_> = dataset
        .iter()
        .map(|r| TrainingSequence {
            cond: Conditioning { bucket: probe.bucket(&[&r.prompt.text, &r.response.text]), source: None },
            target: &r.feedback,
        })
        .collect();
    Ok(FeedbackModel { model: SeqModel::train(vocab, &seqs, seq_config)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sampled { seed: u64 },
}

pub fn critique(model: &FeedbackModel, prompt: &Prompt, response: &ResponseText, mode: DecodeMode) -> Vec<String> {
    let cond = model.conditioning(prompt, response);
    match mode {
        DecodeMode::Greedy => model.model.decode_greedy(cond),
        DecodeMode::Sampled { seed } => model.model.decode_sampled(cond, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub original: ResponseText,
    pub feedback: Vec<String>,
    pub refined: ResponseText,
    pub accepted: bool,
    pub judge_delta: f64,
}

/// Runs the loop and returns every iteration's outcome. The working
/// response advances to the refined one only when it is accepted.
pub fn self_improve_trace(
    prompt: &Prompt,
    responder: &dyn Responder,
    feedback_model: &FeedbackModel,
    refiner: &dyn Refiner,
    judge: &dyn ScoreJudge,
    max_iters: usize,
) -> Result<Vec<RefinementOutcome>> {
    if max_iters == 0 {
        return Err(AlignError::invalid("max_iters must be at least 1"));
    }
    let unavailable = |iteration: usize, e: crate::backend::BackendError| AlignError::BackendUnavailable {
        iteration,
        message: e.0,
    };
    let first = responder.respond(prompt).map_err(|e| unavailable(0, e))?;
    let mut current = ResponseText::new(format!("{}:r0", prompt.id), prompt, first, Provenance::Base)?;
    let mut outcomes = Vec::with_capacity(max_iters);
    for iteration in 0..max_iters {
        let feedback = critique(feedback_model, prompt, &current, DecodeMode::Greedy);
        let text = refiner.refine(prompt, &current, &feedback).map_err(|e| unavailable(iteration, e))?;
        let refined = ResponseText {
            id: format!("{}:r{}", prompt.id, iteration + 1),
            prompt_id: prompt.id.clone(),
            text,
            provenance: Provenance::Refined,
        };
        let judge_delta = judge.score(prompt, &refined.text) - judge.score(prompt, &current.text);
        let accepted = judge_delta > 0.0 && !refined.text.trim().is_empty();
        outcomes.push(RefinementOutcome {
            original: current.clone(),
            feedback,
            refined: refined.clone(),
            accepted,
            judge_delta,
        });
        if accepted {
            current = refined;
        }
    }
    Ok(outcomes)
}

/// Preference pairs `(refined ≻ original)` from every strictly improving
/// iteration; at most `max_iters` pairs.
pub fn self_improve(
    prompt: &Prompt,
    responder: &dyn Responder,
    feedback_model: &FeedbackModel,
    refiner: &dyn Refiner,
    judge: &dyn ScoreJudge,
    max_iters: usize,
) -> Result<Vec<PreferencePair>> {
    self_improve_trace(prompt, responder, feedback_model, refiner, judge, max_iters)?
        .into_iter()
        .filter(|o| o.accepted)
        .map(|o| PreferencePair::new(prompt.clone(), o.refined, o.original))
        .collect()
}
