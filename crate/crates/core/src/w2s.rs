//! Correction-based preference synthesis and the weak-to-strong cycle.
//!
//! A correction model `μ_ψ(y_c | y_o, x)` is trained on question / original
//! answer / corrected answer triples. Applied to fresh base answers it yields
//! `(corrected ≻ original)` preference pairs, which train a reward model,
//! which in turn drives KL-penalized policy optimization. [`w2s_cycle`]
//! repeats these stages and records every artifact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{Responder, ScoreJudge, TableResponder};
use crate::error::{AlignError, Result};
use crate::io::{write_jsonl, RewardArtifact};
use crate::policy::{optimize_policy, TabularPolicy};
use crate::reward::{pairwise_accuracy, train_reward_model, RewardModelSpec, RewardTraining, RlhfConfig};
use crate::seqmodel::{join_tokens, split_tokens, Conditioning, SeqModel, SeqModelConfig, TrainingSequence, Vocab};
use crate::types::{PreferencePair, Prompt, Provenance, ResponseText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topic {
    Values,
    Mathematics,
    CodeReasoning,
    ScienceEngineering,
    Other,
}

/// Question, original answer and annotator correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QACRecord {
    pub prompt: Prompt,
    pub original: ResponseText,
    /// May equal `original.text` when the annotator approved it unchanged.
    pub corrected: ResponseText,
    pub annotator_id: String,
    pub topic: Topic,
}

impl QACRecord {
    pub fn validate(&self) -> Result<()> {
        if self.corrected.text.trim().is_empty() {
            return Err(AlignError::invalid(format!("empty correction for prompt {}", self.prompt.id)));
        }
        if self.original.text.trim().is_empty() {
            return Err(AlignError::invalid(format!("empty original answer for prompt {}", self.prompt.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionModel {
    pub model: SeqModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorConfig {
    pub alpha: f64,
    pub max_len: usize,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        CorrectorConfig { alpha: 0.1, max_len: 128 }
    }
}

impl CorrectionModel {
    pub fn uniform(vocab: Vocab) -> Self {
        CorrectionModel { model: SeqModel::uniform(vocab, SeqModelConfig::default()) }
    }

    pub fn bucket(&self, prompt: &Prompt, original: &str) -> u64 {
        self.model.bucket(&[&prompt.text, original])
    }

    /// `ln μ_ψ(y_c | y_o, x)`, token-factorized.
    pub fn log_prob(&self, record: &QACRecord) -> Result<f64> {
        let source = split_tokens(&record.original.text);
        let cond = Conditioning { bucket: self.bucket(&record.prompt, &record.original.text), source: Some(&source) };
        self.model.log_prob(cond, &split_tokens(&record.corrected.text))
    }
}

/// `−mean ln μ_ψ(y_c | y_o, x)`.
pub fn aligner_loss(model: &CorrectionModel, dataset: &[QACRecord]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let mut total = 0.0;
    for r in dataset {
        total -= model.log_prob(r)?;
    }
    Ok(total / dataset.len() as f64)
}

pub fn train_corrector(dataset: &[QACRecord], config: &CorrectorConfig) -> Result<CorrectionModel> {
    if dataset.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    for r in dataset {
        r.validate()?;
    }
    let tokenized: Vec<(Vec<String>, Vec<String>)> = dataset
        .iter()
        .map(|r| (split_tokens(&r.original.text), split_tokens(&r.corrected.text)))
        .collect();
    let vocab = Vocab::new(tokenized.iter().flat_map(|(_, c)| c.iter()));
    let seq_config = SeqModelConfig { alpha: config.alpha, max_len: config.max_len, ..Default::default() };
    let probe = SeqModel::uniform(Vocab::new::<_, &str>([]), seq_config);
    let seqs: Vec<_> = dataset
        .iter()
        .zip(&tokenized)
        .map(|(r, (src, tgt))| TrainingSequence {
            cond: Conditioning { bucket: probe.bucket(&[&r.prompt.text, &r.original.text]), source: Some(src) },
            target: tgt,
        })
        .collect();
    Ok(CorrectionModel { model: SeqModel::train(vocab, &seqs, seq_config)? })
}

/// Greedy correction of `original`. An empty decode keeps the original text.
pub fn correct(model: &CorrectionModel, prompt: &Prompt, original: &ResponseText) -> ResponseText {
    let source = split_tokens(&original.text);
    let cond = Conditioning { bucket: model.bucket(prompt, &original.text), source: Some(&source) };
    let tokens = model.model.decode_greedy(cond);
    let text = if tokens.is_empty() { original.text.clone() } else { join_tokens(&tokens) };
    ResponseText {
        id: format!("{}+c", original.id),
        prompt_id: prompt.id.clone(),
        text,
        provenance: Provenance::Corrected,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSource {
    pub prompt_id: String,
    pub original_id: String,
    pub corrected_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisManifest {
    pub iteration: usize,
    pub pairs_emitted: usize,
    pub pairs_skipped_identical: usize,
    pub provenance: Vec<PairSource>,
    pub skipped_prompt_ids: Vec<String>,
}

/// For each prompt: `y_o = base(x)`, `y_c = correct(x, y_o)`, and a pair
/// `(y_c ≻ y_o)` unless the texts are identical.
pub fn synthesize_preferences(
    prompts: &[Prompt],
    base: &dyn Responder,
    corrector: &CorrectionModel,
) -> Result<(Vec<PreferencePair>, SynthesisManifest)> {
    if prompts.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let mut pairs = Vec::new();
    let mut manifest = SynthesisManifest {
        iteration: 0,
        pairs_emitted: 0,
        pairs_skipped_identical: 0,
        provenance: Vec::new(),
        skipped_prompt_ids: Vec::new(),
    };
    for prompt in prompts {
        let text = base
            .respond(prompt)
            .map_err(|e| AlignError::BackendFailed { prompt_id: prompt.id.clone(), message: e.0 })?;
        let original = ResponseText::new(format!("{}:base", prompt.id), prompt, text, Provenance::Base)?;
        let corrected = correct(corrector, prompt, &original);
        if corrected.text == original.text {
            manifest.pairs_skipped_identical += 1;
            manifest.skipped_prompt_ids.push(prompt.id.clone());
            continue;
        }
        manifest.provenance.push(PairSource {
            prompt_id: prompt.id.clone(),
            original_id: original.id.clone(),
            corrected_id: corrected.id.clone(),
        });
        pairs.push(PreferencePair::new(prompt.clone(), corrected, original)?);
        manifest.pairs_emitted += 1;
    }
    Ok((pairs, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct W2sConfig {
    pub rlhf: RlhfConfig,
    pub corrector: CorrectorConfig,
    pub reward: RewardModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub judge_id: String,
    pub mean_judge_original: f64,
    pub mean_judge_corrected: f64,
    /// Expected judge score under the optimized policy, averaged over prompts.
    pub mean_judge_policy: f64,
    pub reward_train_accuracy: f64,
    pub final_reward_loss: f64,
    pub pairs_emitted: usize,
    pub pairs_skipped_identical: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationArtifacts {
    pub iteration: usize,
    pub corrector: CorrectionModel,
    pub preferences: Vec<PreferencePair>,
    pub manifest: SynthesisManifest,
    pub reward: RewardTraining,
    pub policy: TabularPolicy,
    pub metrics: IterationMetrics,
}

fn stage<T>(stage: &'static str, iteration: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| AlignError::Cycle { stage, iteration, source: Box::new(e) })
}

/// Uniform policy over `{original, corrected}` for every prompt that
/// produced a pair, and `{original}` alone for skipped prompts.
fn candidate_policy(prompts: &[Prompt], base: &dyn Responder, pairs: &[PreferencePair]) -> Result<TabularPolicy> {
    let mut sets = Vec::with_capacity(prompts.len());
    for prompt in prompts {
        let candidates = match pairs.iter().find(|p| p.prompt.id == prompt.id) {
            Some(pair) => vec![pair.loser.clone(), pair.winner.clone()],
            None => {
                let text = base
                    .respond(prompt)
                    .map_err(|e| AlignError::BackendFailed { prompt_id: prompt.id.clone(), message: e.0 })?;
                vec![ResponseText::new(format!("{}:base", prompt.id), prompt, text, Provenance::Base)?]
            }
        };
        sets.push((prompt.clone(), candidates));
    }
    TabularPolicy::uniform(sets)
}

/// Iterates corrector → synthesis → reward model → policy.
///
/// Iteration 1 corrects answers from `base`. Later iterations correct the
/// previous policy's most likely answer, and the corrector is retrained on the
/// seed triples plus every triple synthesized so far (annotator id
/// `aligner-iter-<k>`).
pub fn w2s_cycle(
    seed_qac: &[QACRecord],
    prompts: &[Prompt],
    base: &dyn Responder,
    iterations: usize,
    config: &W2sConfig,
    judge: &dyn ScoreJudge,
) -> Result<Vec<IterationArtifacts>> {
    if iterations == 0 {
        return Err(AlignError::invalid("iterations must be at least 1"));
    }
    config.rlhf.validate()?;
    let mut training: Vec<QACRecord> = seed_qac.to_vec();
    let mut out: Vec<IterationArtifacts> = Vec::with_capacity(iterations);
    for iteration in 1..=iterations {
        let previous: Option<TableResponder> = out.last().map(|a: &IterationArtifacts| TableResponder {
            answers: a
                .policy
                .entries
                .iter()
                .map(|e| (e.prompt.id.clone(), a.policy.mode(&e.prompt.id).map(|r| r.text.clone()).unwrap_or_default()))
                .collect(),
        });
        let responder: &dyn Responder = match &previous {
            Some(t) => t,
            None => base,
        };

        let corrector = stage("corrector", iteration, train_corrector(&training, &config.corrector))?;
        let (pairs, mut manifest) = stage("synthesis", iteration, synthesize_preferences(prompts, responder, &corrector))?;
        manifest.iteration = iteration;
        let reward = stage("reward", iteration, train_reward_model(&pairs, config.reward, &config.rlhf))?;
        let base_policy = stage("policy", iteration, candidate_policy(prompts, responder, &pairs))?;
        let policy = stage("policy", iteration, optimize_policy(&base_policy, &base_policy, &reward.model, &config.rlhf))?;

        let metrics = IterationMetrics {
            iteration,
            judge_id: judge.id().to_string(),
            mean_judge_original: mean(base_policy.entries.iter().map(|e| judge.score(&e.prompt, &e.candidates[0].text))),
            mean_judge_corrected: mean(
                base_policy.entries.iter().map(|e| judge.score(&e.prompt, &e.candidates[e.candidates.len() - 1].text)),
            ),
            mean_judge_policy: mean(policy.entries.iter().map(|e| {
                e.probs().iter().zip(&e.candidates).map(|(p, c)| p * judge.score(&e.prompt, &c.text)).sum()
            })),
            reward_train_accuracy: stage("reward", iteration, pairwise_accuracy(&reward.model, &pairs))?,
            final_reward_loss: *reward.loss_history.last().expect("steps ≥ 1"),
            pairs_emitted: manifest.pairs_emitted,
            pairs_skipped_identical: manifest.pairs_skipped_identical,
        };

        training.extend(pairs.iter().map(|p| QACRecord {
            prompt: p.prompt.clone(),
            original: p.loser.clone(),
            corrected: p.winner.clone(),
            annotator_id: format!("aligner-iter-{iteration}"),
            topic: Topic::Other,
        }));
        out.push(IterationArtifacts { iteration, corrector, preferences: pairs, manifest, reward, policy, metrics });
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    metrics: &'a IterationMetrics,
    manifest: &'a SynthesisManifest,
}

/// Writes `iter-<k>/{corrector.json, prefs.jsonl, reward.json, policy.json,
/// metrics.json}` under `dir`.
pub fn write_cycle_artifacts(dir: &Path, artifacts: &[IterationArtifacts], config: &W2sConfig) -> Result<()> {
    for a in artifacts {
        let d = dir.join(format!("iter-{}", a.iteration));
        fs::create_dir_all(&d)?;
        fs::write(d.join("corrector.json"), serde_json::to_vec_pretty(&a.corrector)?)?;
        write_jsonl(&d.join("prefs.jsonl"), &a.preferences)?;
        let reward = RewardArtifact::new(&a.reward, config.rlhf);
        fs::write(d.join("reward.json"), serde_json::to_vec_pretty(&reward)?)?;
        fs::write(d.join("policy.json"), serde_json::to_vec_pretty(&a.policy)?)?;
        let metrics = MetricsFile { metrics: &a.metrics, manifest: &a.manifest };
        fs::write(d.join("metrics.json"), serde_json::to_vec_pretty(&metrics)?)?;
    }
    Ok(())
}
