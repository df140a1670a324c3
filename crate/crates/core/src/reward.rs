//! Bradley-Terry reward modeling.
//!
//! The reward model scores a response from hashed bag-of-tokens features,
//! either linearly or through one tanh hidden layer. Training minimizes the
//! pairwise logistic loss `-mean log σ(r(y_w) - r(y_l))` by full-batch
//! gradient descent with analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::features::HashedBagFeaturizer;
use crate::math::{log_sigmoid, sigmoid};
use crate::types::{PreferencePair, Prompt, ResponseText};

/// Anything that assigns a scalar reward to a response.
pub trait Reward {
    fn reward(&self, prompt: &Prompt, response: &ResponseText) -> f64;
}

impl<F> Reward for F
where
    F: Fn(&Prompt, &ResponseText) -> f64,
{
    fn reward(&self, prompt: &Prompt, response: &ResponseText) -> f64 {
        self(prompt, response)
    }
}

/// Hyper-parameters shared by reward training and policy optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlhfConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for RlhfConfig {
    fn default() -> Self {
        RlhfConfig { beta: 1.0, learning_rate: 0.1, steps: 200, seed: 0 }
    }
}

impl RlhfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(AlignError::NonPositiveBeta);
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(AlignError::invalid("learning_rate must be positive"));
        }
        if self.steps == 0 {
            return Err(AlignError::invalid("steps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerKind {
    Linear,
    /// One tanh hidden layer followed by a linear readout.
    Mlp { hidden: usize },
}

impl ScorerKind {
    pub const DEFAULT_HIDDEN: usize = 16;

    pub fn param_count(&self, dim: usize) -> usize {
        match *self {
            ScorerKind::Linear => dim,
            ScorerKind::Mlp { hidden } => hidden * dim + hidden + hidden + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub params: Vec<f64>,
    pub featurizer: HashedBagFeaturizer,
    pub kind: ScorerKind,
}

impl RewardModel {
    pub fn zeros(featurizer: HashedBagFeaturizer, kind: ScorerKind) -> Self {
        RewardModel { params: vec![0.0; kind.param_count(featurizer.dim)], featurizer, kind }
    }

    /// Linear weights are zero-initialized; hidden-layer weights are drawn
    /// uniformly from `±1/sqrt(fan_in)` so units are not symmetric.
    pub fn init(featurizer: HashedBagFeaturizer, kind: ScorerKind, seed: u64) -> Self {
        let mut model = Self::zeros(featurizer, kind);
        if let ScorerKind::Mlp { hidden } = kind {
            let dim = featurizer.dim;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s1 = 1.0 / (dim as f64).sqrt();
            let s2 = 1.0 / (hidden as f64).sqrt();
            for w in &mut model.params[..hidden * dim] {
                *w = rng.gen_range(-s1..s1);
            }
            let w2 = hidden * dim + hidden;
            for w in &mut model.params[w2..w2 + hidden] {
                *w = rng.gen_range(-s2..s2);
            }
        }
        model
    }

    pub fn featurizer_id(&self) -> String {
        self.featurizer.id()
    }

    pub fn score_features(&self, f: &[f64]) -> f64 {
        match self.kind {
            ScorerKind::Linear => dot(&self.params, f),
            ScorerKind::Mlp { hidden } => {
                let dim = self.featurizer.dim;
                let (w1, rest) = self.params.split_at(hidden * dim);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut out = b2[0];
                for h in 0..hidden {
                    let a = dot(&w1[h * dim..(h + 1) * dim], f) + b1[h];
                    out += w2[h] * a.tanh();
                }
                out
            }
        }
    }

    /// Adds `scale * ∂score/∂params` at features `f` into `acc`.
    fn accumulate_grad(&self, f: &[f64], scale: f64, acc: &mut [f64]) {
        match self.kind {
            ScorerKind::Linear => {
                for (a, x) in acc.iter_mut().zip(f) {
                    *a += scale * x;
                }
            }
            ScorerKind::Mlp { hidden } => {
                let dim = self.featurizer.dim;
                let b1_off = hidden * dim;
                let w2_off = b1_off + hidden;
                let b2_off = w2_off + hidden;
                for h in 0..hidden {
                    let row = &self.params[h * dim..(h + 1) * dim];
                    let t = (dot(row, f) + self.params[b1_off + h]).tanh();
                    let w2 = self.params[w2_off + h];
                    let back = scale * w2 * (1.0 - t * t);
                    for (a, x) in acc[h * dim..(h + 1) * dim].iter_mut().zip(f) {
                        *a += back * x;
                    }
                    acc[b1_off + h] += back;
                    acc[w2_off + h] += scale * t;
                }
                acc[b2_off] += scale;
            }
        }
    }
}

impl Reward for RewardModel {
    fn reward(&self, prompt: &Prompt, response: &ResponseText) -> f64 {
        self.score_features(&self.featurizer.featurize(prompt, response))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `P(winner ≻ loser) = σ(r_w − r_l)`.
pub fn bt_preference_prob(r_winner: f64, r_loser: f64) -> Result<f64> {
    if !r_winner.is_finite() || !r_loser.is_finite() {
        return Err(AlignError::NonFiniteReward);
    }
    Ok(sigmoid(r_winner - r_loser))
}

pub fn reward_loss<R: Reward + ?Sized>(model: &R, batch: &[PreferencePair]) -> Result<f64> {
    if batch.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let mut total = 0.0;
    for pair in batch {
        let rw = model.reward(&pair.prompt, &pair.winner);
        let rl = model.reward(&pair.prompt, &pair.loser);
        if !rw.is_finite() || !rl.is_finite() {
            return Err(AlignError::NonFiniteReward);
        }
        total -= log_sigmoid(rw - rl);
    }
    Ok(total / batch.len() as f64)
}

pub fn reward_grad(model: &RewardModel, batch: &[PreferencePair]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let feats: Vec<_> = batch
        .iter()
        .map(|p| {
            (
                model.featurizer.featurize(&p.prompt, &p.winner),
                model.featurizer.featurize(&p.prompt, &p.loser),
            )
        })
        .collect();
    grad_from_features(model, &feats)
}

fn grad_from_features(model: &RewardModel, feats: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    let n = feats.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    for (fw, fl) in feats {
        let delta = model.score_features(fw) - model.score_features(fl);
        if !delta.is_finite() {
            return Err(AlignError::NonFiniteReward);
        }
        // d/dΔ of -log σ(Δ) is -σ(-Δ)
        let coef = -sigmoid(-delta) / n;
        model.accumulate_grad(fw, coef, &mut grad);
        model.accumulate_grad(fl, -coef, &mut grad);
    }
    Ok(grad)
}

fn loss_from_features(model: &RewardModel, feats: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let total: f64 = feats
        .iter()
        .map(|(fw, fl)| -log_sigmoid(model.score_features(fw) - model.score_features(fl)))
        .sum();
    total / feats.len() as f64
}

/// Reward architecture choice for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardModelSpec {
    pub featurizer: HashedBagFeaturizer,
    pub kind: ScorerKind,
}

impl Default for RewardModelSpec {
    fn default() -> Self {
        RewardModelSpec { featurizer: HashedBagFeaturizer::default(), kind: ScorerKind::Linear }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTraining {
    pub model: RewardModel,
    /// Loss after each update; `loss_history.len() == steps`.
    pub loss_history: Vec<f64>,
}

pub fn train_reward_model(
    dataset: &[PreferencePair],
    spec: RewardModelSpec,
    config: &RlhfConfig,
) -> Result<RewardTraining> {
    if dataset.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    if !(config.learning_rate > 0.0) || config.steps == 0 {
        return Err(AlignError::invalid("learning_rate must be positive and steps ≥ 1"));
    }
    let mut model = RewardModel::init(spec.featurizer, spec.kind, config.seed);
    let feats: Vec<_> = dataset
        .iter()
        .map(|p| {
            (
                spec.featurizer.featurize(&p.prompt, &p.winner),
                spec.featurizer.featurize(&p.prompt, &p.loser),
            )
        })
        .collect();
    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let grad = grad_from_features(&model, &feats)
            .map_err(|_| AlignError::TrainingDiverged { step })?;
        for (w, g) in model.params.iter_mut().zip(&grad) {
            *w -= config.learning_rate * g;
        }
        let loss = loss_from_features(&model, &feats);
        if !loss.is_finite() || model.params.iter().any(|w| !w.is_finite()) {
            return Err(AlignError::TrainingDiverged { step });
        }
        history.push(loss);
    }
    Ok(RewardTraining { model, loss_history: history })
}

/// Fraction of pairs where the model prefers the winner (`σ(Δ) > 0.5`).
pub fn pairwise_accuracy<R: Reward + ?Sized>(model: &R, pairs: &[PreferencePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let mut correct = 0usize;
    for p in pairs {
        let prob =
            bt_preference_prob(model.reward(&p.prompt, &p.winner), model.reward(&p.prompt, &p.loser))?;
        if prob > 0.5 {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}
