//! Tabular softmax policies and the KL-penalized objective.
//!
//! For each prompt the policy holds a finite candidate list and one logit per
//! candidate, so expectations and KL terms are exact sums. The per-prompt
//! objective `J = Σ π_i r_i − β Σ π_i ln(π_i / q_i)` has logit gradient
//! `∂J/∂z_j = π_j (a_j − Σ_i π_i a_i)` with `a_i = r_i − β ln(π_i / q_i)`,
//! and its maximizer is the Gibbs distribution `q_i e^{r_i/β} / Z`.

use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::math::{argmax, logsumexp, softmax, total_variation};
use crate::reward::{Reward, RlhfConfig};
use crate::types::{Prompt, ResponseText};

const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub prompt: Prompt,
    pub candidates: Vec<ResponseText>,
    pub logits: Vec<f64>,
}

impl PolicyEntry {
    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn log_probs(&self) -> Vec<f64> {
        let lse = logsumexp(&self.logits);
        self.logits.iter().map(|z| z - lse).collect()
    }

    fn same_support(&self, other: &PolicyEntry) -> bool {
        self.prompt.id == other.prompt.id
            && self.candidates.len() == other.candidates.len()
            && self
                .candidates
                .iter()
                .zip(&other.candidates)
                .all(|(a, b)| a.id == b.id && a.text == b.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub entries: Vec<PolicyEntry>,
}

impl TabularPolicy {
    pub fn new(entries: Vec<PolicyEntry>) -> Result<Self> {
        for e in &entries {
            if e.candidates.is_empty() {
                return Err(AlignError::invalid(format!("prompt {} has no candidates", e.prompt.id)));
            }
            if e.logits.len() != e.candidates.len() {
                return Err(AlignError::invalid(format!(
                    "prompt {} has {} logits for {} candidates",
                    e.prompt.id,
                    e.logits.len(),
                    e.candidates.len()
                )));
            }
            if e.logits.iter().any(|z| !z.is_finite()) {
                return Err(AlignError::invalid(format!("prompt {} has non-finite logits", e.prompt.id)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(e.prompt.id.as_str()) {
                return Err(AlignError::invalid(format!("duplicate prompt id {}", e.prompt.id)));
            }
        }
        Ok(TabularPolicy { entries })
    }

    /// Uniform distribution over each prompt's candidates.
    pub fn uniform(sets: Vec<(Prompt, Vec<ResponseText>)>) -> Result<Self> {
        Self::new(
            sets.into_iter()
                .map(|(prompt, candidates)| {
                    let logits = vec![0.0; candidates.len()];
                    PolicyEntry { prompt, candidates, logits }
                })
                .collect(),
        )
    }

    /// Builds a policy whose logits are `ln p`. Probabilities must be strictly
    /// positive and normalized.
    pub fn from_probs(sets: Vec<(Prompt, Vec<ResponseText>, Vec<f64>)>) -> Result<Self> {
        let mut entries = Vec::with_capacity(sets.len());
        for (prompt, candidates, probs) in sets {
            check_normalized(&probs)?;
            if probs.iter().any(|&p| p <= 0.0) {
                return Err(AlignError::invalid(format!(
                    "prompt {} has a zero-probability candidate",
                    prompt.id
                )));
            }
            let logits = probs.iter().map(|p| p.ln()).collect();
            entries.push(PolicyEntry { prompt, candidates, logits });
        }
        Self::new(entries)
    }

    pub fn entry(&self, prompt_id: &str) -> Option<&PolicyEntry> {
        self.entries.iter().find(|e| e.prompt.id == prompt_id)
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(PolicyEntry::probs).collect()
    }

    /// Highest-probability candidate; lowest index wins ties.
    pub fn mode(&self, prompt_id: &str) -> Option<&ResponseText> {
        let e = self.entry(prompt_id)?;
        Some(&e.candidates[argmax(&e.logits)])
    }

    /// Rewards for every candidate, in entry order.
    pub fn rewards<R: Reward + ?Sized>(&self, reward: &R) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|e| e.candidates.iter().map(|c| reward.reward(&e.prompt, c)).collect())
            .collect()
    }

    fn check_support(&self, base: &TabularPolicy) -> Result<()> {
        if self.entries.len() != base.entries.len() {
            let missing = self
                .entries
                .iter()
                .find(|e| base.entry(&e.prompt.id).is_none())
                .or_else(|| base.entries.iter().find(|e| self.entry(&e.prompt.id).is_none()));
            return Err(AlignError::SupportMismatch {
                prompt_id: missing.map(|e| e.prompt.id.clone()).unwrap_or_default(),
            });
        }
        for (a, b) in self.entries.iter().zip(&base.entries) {
            if !a.same_support(b) {
                return Err(AlignError::SupportMismatch { prompt_id: a.prompt.id.clone() });
            }
        }
        Ok(())
    }
}

fn check_normalized(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(AlignError::invalid("empty probability vector"));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(AlignError::invalid("probabilities must be finite and nonnegative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > NORMALIZATION_TOL {
        return Err(AlignError::invalid(format!("probabilities sum to {s}, not 1")));
    }
    Ok(())
}

/// `Σ p_i ln(p_i / q_i)` with `0 · ln(0/q) = 0`.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(AlignError::invalid(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    check_normalized(p)?;
    check_normalized(q)?;
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(AlignError::AbsoluteContinuity { index: i });
        }
        kl += pi * (pi / qi).ln();
    }
    // Rounding can leave tiny negatives when p ≈ q.
    Ok(kl.max(0.0))
}

/// Exact KL between two softmax entries, computed from log-probabilities.
fn entry_kl(policy: &PolicyEntry, base: &PolicyEntry) -> f64 {
    let lp = policy.log_probs();
    let lq = base.log_probs();
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(AlignError::NonPositiveBeta);
    }
    Ok(())
}

/// Mean over `prompts` of `E_π[r] − β·KL(π ‖ π_base)`.
///
/// `beta = 0` is accepted here so the unpenalized expected reward can be
/// read off; optimization itself requires `beta > 0`.
pub fn rlhf_objective<R: Reward + ?Sized>(
    policy: &TabularPolicy,
    base: &TabularPolicy,
    reward: &R,
    beta: f64,
    prompts: &[Prompt],
) -> Result<f64> {
    check_beta(beta)?;
    if prompts.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let mut total = 0.0;
    for prompt in prompts {
        let mismatch = || AlignError::SupportMismatch { prompt_id: prompt.id.clone() };
        let pe = policy.entry(&prompt.id).ok_or_else(mismatch)?;
        let be = base.entry(&prompt.id).ok_or_else(mismatch)?;
        if !pe.same_support(be) {
            return Err(mismatch());
        }
        let rewards: Vec<f64> = pe.candidates.iter().map(|c| reward.reward(&pe.prompt, c)).collect();
        total += entry_objective(pe, be, &rewards, beta);
    }
    Ok(total / prompts.len() as f64)
}

fn entry_objective(pe: &PolicyEntry, be: &PolicyEntry, rewards: &[f64], beta: f64) -> f64 {
    let probs = pe.probs();
    let expected: f64 = probs.iter().zip(rewards).map(|(p, r)| p * r).sum();
    if beta == 0.0 {
        expected
    } else {
        expected - beta * entry_kl(pe, be)
    }
}

/// Objective over every entry of `policy` with precomputed rewards.
pub fn objective_from_rewards(
    policy: &TabularPolicy,
    base: &TabularPolicy,
    rewards: &[Vec<f64>],
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    policy.check_support(base)?;
    check_reward_shape(policy, rewards)?;
    if policy.entries.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    let total: f64 = policy
        .entries
        .iter()
        .zip(&base.entries)
        .zip(rewards)
        .map(|((pe, be), r)| entry_objective(pe, be, r, beta))
        .sum();
    Ok(total / policy.entries.len() as f64)
}

fn check_reward_shape(policy: &TabularPolicy, rewards: &[Vec<f64>]) -> Result<()> {
    if rewards.len() != policy.entries.len()
        || rewards.iter().zip(&policy.entries).any(|(r, e)| r.len() != e.candidates.len())
    {
        return Err(AlignError::invalid("reward table does not match policy shape"));
    }
    if rewards.iter().flatten().any(|r| !r.is_finite()) {
        return Err(AlignError::NonFiniteReward);
    }
    Ok(())
}

/// Gradient of [`objective_from_rewards`] with respect to every logit.
pub fn policy_gradient(
    policy: &TabularPolicy,
    base: &TabularPolicy,
    rewards: &[Vec<f64>],
    beta: f64,
) -> Result<Vec<Vec<f64>>> {
    check_beta(beta)?;
    policy.check_support(base)?;
    check_reward_shape(policy, rewards)?;
    let n = policy.entries.len() as f64;
    Ok(policy
        .entries
        .iter()
        .zip(&base.entries)
        .zip(rewards)
        .map(|((pe, be), r)| entry_gradient(pe, be, r, beta, n))
        .collect())
}

fn entry_gradient(pe: &PolicyEntry, be: &PolicyEntry, rewards: &[f64], beta: f64, n: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    logit_gradient(&pe.logits, &be.log_probs(), rewards, beta, n, &mut out);
    out
}

/// Writes `∂J/∂z / n` into `out`; returns the entry objective `J`.
fn logit_gradient(logits: &[f64], base_lp: &[f64], rewards: &[f64], beta: f64, n: f64, out: &mut [f64]) -> f64 {
    let lse = logsumexp(logits);
    let mut mean = 0.0;
    for i in 0..logits.len() {
        let lp = logits[i] - lse;
        let a = rewards[i] - beta * (lp - base_lp[i]);
        out[i] = a;
        mean += lp.exp() * a;
    }
    for i in 0..logits.len() {
        out[i] = (logits[i] - lse).exp() * (out[i] - mean) / n;
    }
    mean
}

/// Closed-form maximizer `π*(y|x) ∝ π_base(y|x) · exp(r(x,y)/β)`.
pub fn gibbs_optimum(base: &TabularPolicy, rewards: &[Vec<f64>], beta: f64) -> Result<Vec<Vec<f64>>> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(AlignError::NonPositiveBeta);
    }
    check_reward_shape(base, rewards)?;
    Ok(base
        .entries
        .iter()
        .zip(rewards)
        .map(|(e, r)| {
            let scores: Vec<f64> =
                e.log_probs().iter().zip(r).map(|(lq, ri)| lq + ri / beta).collect();
            softmax(&scores)
        })
        .collect())
}

/// Largest total-variation distance across prompts.
pub fn max_total_variation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| total_variation(p, q)).fold(0.0, f64::max)
}

/// Exact gradient ascent on the logits of `policy`.
pub fn optimize_policy<R: Reward + ?Sized>(
    policy: &TabularPolicy,
    base: &TabularPolicy,
    reward: &R,
    config: &RlhfConfig,
) -> Result<TabularPolicy> {
    let rewards = policy.rewards(reward);
    optimize_policy_with_rewards(policy, base, &rewards, config)
}

pub fn optimize_policy_with_rewards(
    policy: &TabularPolicy,
    base: &TabularPolicy,
    rewards: &[Vec<f64>],
    config: &RlhfConfig,
) -> Result<TabularPolicy> {
    config.validate()?;
    policy.check_support(base)?;
    check_reward_shape(policy, rewards)?;
    let mut current = policy.clone();
    let n = current.entries.len() as f64;
    let base_lp: Vec<Vec<f64>> = base.entries.iter().map(PolicyEntry::log_probs).collect();
    let mut grad = Vec::new();
    for step in 0..config.steps {
        let mut objective = 0.0;
        for ((pe, blp), r) in current.entries.iter_mut().zip(&base_lp).zip(rewards) {
            grad.resize(r.len(), 0.0);
            objective += logit_gradient(&pe.logits, blp, r, config.beta, n, &mut grad);
            for (z, gi) in pe.logits.iter_mut().zip(&grad) {
                *z += config.learning_rate * gi;
            }
            let max = pe.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for z in &mut pe.logits {
                *z -= max;
            }
        }
        if !objective.is_finite() || current.entries.iter().flat_map(|e| &e.logits).any(|z| !z.is_finite()) {
            return Err(AlignError::OptimizationDiverged { step });
        }
    }
    Ok(current)
}
