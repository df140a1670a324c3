//! JSON-lines dataset files and training artifacts.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::features::HashedBagFeaturizer;
use crate::lang::Lang;
use crate::llf::FeedbackRecord;
use crate::reward::{RewardModel, RewardTraining, RlhfConfig, ScorerKind};
use crate::types::{PreferencePair, Prompt, Provenance, ResponseText};
use crate::w2s::{QACRecord, Topic};

/// Parses one JSON value per non-blank line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| AlignError::Json { line: i + 1, source }))
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| AlignError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Preference dataset line: `{prompt_id, prompt, winner, loser, lang}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRow {
    pub prompt_id: String,
    pub prompt: String,
    pub winner: String,
    pub loser: String,
    #[serde(default)]
    pub lang: Lang,
}

impl PreferenceRow {
    pub fn into_pair(self) -> Result<PreferencePair> {
        let prompt = Prompt::new(self.prompt_id.clone(), self.prompt, self.lang)?;
        let winner = ResponseText::new(format!("{}:w", self.prompt_id), &prompt, self.winner, Provenance::External)?;
        let loser = ResponseText::new(format!("{}:l", self.prompt_id), &prompt, self.loser, Provenance::External)?;
        PreferencePair::new(prompt, winner, loser)
    }

    pub fn from_pair(pair: &PreferencePair) -> Self {
        PreferenceRow {
            prompt_id: pair.prompt.id.clone(),
            prompt: pair.prompt.text.clone(),
            winner: pair.winner.text.clone(),
            loser: pair.loser.text.clone(),
            lang: pair.prompt.lang,
        }
    }
}

pub fn load_preferences(path: &Path) -> Result<Vec<PreferencePair>> {
    read_jsonl::<PreferenceRow>(path)?.into_iter().map(PreferenceRow::into_pair).collect()
}

/// Feedback dataset line: `{prompt, response, feedback: [token]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRow {
    pub prompt: String,
    pub response: String,
    pub feedback: Vec<String>,
}

pub fn feedback_records(rows: Vec<FeedbackRow>) -> Result<Vec<FeedbackRecord>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            let prompt = Prompt::new(format!("fb{i}"), row.prompt, Lang::Unknown)?;
            let response = ResponseText::new(format!("fb{i}:y"), &prompt, row.response, Provenance::Base)?;
            let record = FeedbackRecord { prompt, response, feedback: row.feedback };
            record.validate()?;
            Ok(record)
        })
        .collect()
}

pub fn load_feedback(path: &Path) -> Result<Vec<FeedbackRecord>> {
    feedback_records(read_jsonl(path)?)
}

/// Q-A-C line: `{prompt, original, corrected, annotator_id, topic}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QacRow {
    pub prompt: String,
    pub original: String,
    pub corrected: String,
    pub annotator_id: String,
    pub topic: Topic,
}

pub fn qac_records(rows: Vec<QacRow>) -> Result<Vec<QACRecord>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            let prompt = Prompt::new(format!("qac{i}"), row.prompt, Lang::Unknown)?;
            let original = ResponseText::new(format!("qac{i}:o"), &prompt, row.original, Provenance::Base)?;
            let corrected = ResponseText::new(format!("qac{i}:c"), &prompt, row.corrected, Provenance::Corrected)?;
            let record = QACRecord { prompt, original, corrected, annotator_id: row.annotator_id, topic: row.topic };
            record.validate()?;
            Ok(record)
        })
        .collect()
}

pub fn load_qac(path: &Path) -> Result<Vec<QACRecord>> {
    qac_records(read_jsonl(path)?)
}

/// Reward training artifact: `{params, featurizer_id, config, loss_history}`
/// plus the scorer shape needed to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardArtifact {
    pub params: Vec<f64>,
    pub featurizer_id: String,
    pub dim: usize,
    pub scorer: ScorerKind,
    pub config: RlhfConfig,
    pub loss_history: Vec<f64>,
}

impl RewardArtifact {
    pub fn new(training: &RewardTraining, config: RlhfConfig) -> Self {
        RewardArtifact {
            params: training.model.params.clone(),
            featurizer_id: training.model.featurizer_id(),
            dim: training.model.featurizer.dim,
            scorer: training.model.kind,
            config,
            loss_history: training.loss_history.clone(),
        }
    }

    pub fn to_model(&self) -> Result<RewardModel> {
        let featurizer = HashedBagFeaturizer::new(self.dim);
        if featurizer.id() != self.featurizer_id {
            return Err(AlignError::invalid(format!("unsupported featurizer {}", self.featurizer_id)));
        }
        if self.params.len() != self.scorer.param_count(self.dim) {
            return Err(AlignError::invalid("parameter count does not match scorer shape"));
        }
        Ok(RewardModel { params: self.params.clone(), featurizer, kind: self.scorer })
    }
}
