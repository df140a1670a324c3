//! Smoothed conditional-categorical sequence model.
//!
//! This is the machinery behind both the critique model and the correction
//! model. A target sequence `c_1 … c_L` is scored token by token,
//! `P(c) = Π_t P(c_t | context, t, c_{t-1})`, where `context` is a bucket
//! obtained by hashing the conditioning texts.
//!
//! Lookups back off through these tables, first hit wins:
//!
//! 1. exact: `(context bucket, position, previous token)`
//! 2. aligned: `(source token at position t, previous token)`
//! 3. aligned-source: `(source token at position t)`
//! 4. bigram: `(previous token)`
//! 5. unigram
//!
//! Tiers 2 and 3 only exist when training sequences carry a source sequence
//! (the correction model conditions on the original answer's tokens). Past
//! the end of the source, the "source token" is the offset past the end,
//! so edits that append text stay learnable.
//!
//! Every stored row is additively smoothed, `(n_v + α) / (n + αV)`, hence
//! every lookup returns a normalized distribution over the whole vocabulary.
//! The end-of-sequence token is trained as the transition after the last
//! target token and terminates decoding; [`SeqModel::log_prob`] sums only
//! over the listed target tokens.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::math::{argmax, fnv1a, fnv1a_extend};

pub const EOS: &str = "</s>";
pub const EOS_ID: u32 = 0;
/// Previous-token id used at position 0.
pub const BOS_ID: u32 = u32::MAX;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BUCKETS: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocab {
    /// Vocabulary with [`EOS`] at id 0 followed by the given tokens in
    /// first-seen order; duplicates are ignored.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab { tokens: vec![EOS.to_string()], index: BTreeMap::new() };
        v.index.insert(EOS.to_string(), EOS_ID);
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> std::result::Result<Self, Self::Error> {
        if tokens.first().map(String::as_str) != Some(EOS) {
            return Err(format!("vocabulary must start with {EOS}"));
        }
        let v = Vocab::new(tokens.iter().skip(1));
        if v.len() != tokens.len() {
            return Err("vocabulary contains duplicate tokens".into());
        }
        Ok(v)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqModelConfig {
    /// Additive smoothing constant.
    pub alpha: f64,
    /// Number of context buckets the conditioning hash is reduced to.
    pub buckets: u64,
    /// Decode length cap, excluding the end token.
    pub max_len: usize,
}

impl Default for SeqModelConfig {
    fn default() -> Self {
        SeqModelConfig { alpha: DEFAULT_ALPHA, buckets: DEFAULT_BUCKETS, max_len: 32 }
    }
}

impl SeqModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(AlignError::invalid("smoothing alpha must be positive and finite"));
        }
        if self.buckets == 0 {
            return Err(AlignError::invalid("bucket count must be positive"));
        }
        Ok(())
    }
}

/// Hash of the conditioning texts, reduced to `buckets`.
pub fn context_bucket(parts: &[&str], buckets: u64) -> u64 {
    let mut h = fnv1a(b"ctx");
    for p in parts {
        h = fnv1a_extend(h, &[0x1f]);
        h = fnv1a_extend(h, p.as_bytes());
    }
    h % buckets
}

fn source_key(source: &[String], pos: usize) -> u64 {
    match source.get(pos) {
        Some(tok) => fnv1a_extend(fnv1a(b"tok\x1f"), tok.as_bytes()),
        None => fnv1a_extend(fnv1a(b"end\x1f"), (pos - source.len()).to_string().as_bytes()),
    }
}

/// What a sequence is conditioned on.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    pub bucket: u64,
    pub source: Option<&'a [String]>,
}

#[derive(Debug, Clone)]
pub struct TrainingSequence<'a> {
    pub cond: Conditioning<'a>,
    pub target: &'a [String],
}

/// Whitespace tokenization used for critique and correction text.
pub fn split_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

pub fn join_tokens(tokens: &[String]) -> String {
    tokens.join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SeqModelData", try_from = "SeqModelData")]
pub struct SeqModel {
    vocab: Vocab,
    config: SeqModelConfig,
    exact: BTreeMap<(u64, u32, u32), Vec<f64>>,
    aligned: BTreeMap<(u64, u32), Vec<f64>>,
    aligned_source: BTreeMap<u64, Vec<f64>>,
    bigram: BTreeMap<u32, Vec<f64>>,
    unigram: Vec<f64>,
}

#[derive(Default)]
struct Counts {
    exact: BTreeMap<(u64, u32, u32), Vec<f64>>,
    aligned: BTreeMap<(u64, u32), Vec<f64>>,
    aligned_source: BTreeMap<u64, Vec<f64>>,
    bigram: BTreeMap<u32, Vec<f64>>,
    unigram: Vec<f64>,
}

fn bump<K: Ord>(map: &mut BTreeMap<K, Vec<f64>>, key: K, next: u32, v: usize) {
    map.entry(key).or_insert_with(|| vec![0.0; v])[next as usize] += 1.0;
}

fn smooth(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    let denom = total + alpha * counts.len() as f64;
    counts.iter().map(|c| (c + alpha) / denom).collect()
}

impl SeqModel {
    /// Every conditional is uniform over `vocab`.
    pub fn uniform(vocab: Vocab, config: SeqModelConfig) -> Self {
        let v = vocab.len();
        SeqModel {
            vocab,
            config,
            exact: BTreeMap::new(),
            aligned: BTreeMap::new(),
            aligned_source: BTreeMap::new(),
            bigram: BTreeMap::new(),
            unigram: vec![1.0 / v as f64; v],
        }
    }

    /// Smoothed maximum-likelihood estimate. Target tokens missing from
    /// `vocab` are an error.
    pub fn train(vocab: Vocab, data: &[TrainingSequence<'_>], config: SeqModelConfig) -> Result<Self> {
        config.validate()?;
        let v = vocab.len();
        let mut counts = Counts { unigram: vec![0.0; v], ..Default::default() };
        for seq in data {
            let ids = seq
                .target
                .iter()
                .map(|t| vocab.id(t).ok_or_else(|| AlignError::UnknownToken(t.clone())))
                .collect::<Result<Vec<_>>>()?;
            let mut prev = BOS_ID;
            for pos in 0..=ids.len() {
                let next = ids.get(pos).copied().unwrap_or(EOS_ID);
                bump(&mut counts.exact, (seq.cond.bucket, pos as u32, prev), next, v);
                if let Some(src) = seq.cond.source {
                    let sk = source_key(src, pos);
                    bump(&mut counts.aligned, (sk, prev), next, v);
                    bump(&mut counts.aligned_source, sk, next, v);
                }
                bump(&mut counts.bigram, prev, next, v);
                counts.unigram[next as usize] += 1.0;
                prev = next;
            }
        }
        let a = config.alpha;
        Ok(SeqModel {
            exact: counts.exact.into_iter().map(|(k, c)| (k, smooth(&c, a))).collect(),
            aligned: counts.aligned.into_iter().map(|(k, c)| (k, smooth(&c, a))).collect(),
            aligned_source: counts.aligned_source.into_iter().map(|(k, c)| (k, smooth(&c, a))).collect(),
            bigram: counts.bigram.into_iter().map(|(k, c)| (k, smooth(&c, a))).collect(),
            unigram: smooth(&counts.unigram, a),
            vocab,
            config,
        })
    }

    /// Overrides one exact-tier conditional. `probs` must be normalized.
    pub fn set_exact(&mut self, bucket: u64, pos: u32, prev: u32, probs: Vec<f64>) -> Result<()> {
        self.check_row(&probs)?;
        self.exact.insert((bucket, pos, prev), probs);
        Ok(())
    }

    fn check_row(&self, probs: &[f64]) -> Result<()> {
        if probs.len() != self.vocab.len() {
            return Err(AlignError::invalid("conditional length differs from vocabulary size"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(AlignError::invalid("conditional distribution is not normalized"));
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config(&self) -> &SeqModelConfig {
        &self.config
    }

    pub fn bucket(&self, parts: &[&str]) -> u64 {
        context_bucket(parts, self.config.buckets)
    }

    /// Conditional distribution over the vocabulary after backoff.
    pub fn distribution(&self, cond: Conditioning<'_>, pos: usize, prev: u32) -> &[f64] {
        if let Some(d) = self.exact.get(&(cond.bucket, pos as u32, prev)) {
            return d;
        }
        if let Some(src) = cond.source {
            let sk = source_key(src, pos);
            if let Some(d) = self.aligned.get(&(sk, prev)) {
                return d;
            }
            if let Some(d) = self.aligned_source.get(&sk) {
                return d;
            }
        }
        if let Some(d) = self.bigram.get(&prev) {
            return d;
        }
        &self.unigram
    }

    /// `Σ_t ln P(c_t | cond, t, c_{t-1})` over the target tokens.
    pub fn log_prob(&self, cond: Conditioning<'_>, target: &[String]) -> Result<f64> {
        let mut prev = BOS_ID;
        let mut total = 0.0;
        for (pos, tok) in target.iter().enumerate() {
            let id = self.vocab.id(tok).ok_or_else(|| AlignError::UnknownToken(tok.clone()))?;
            total += self.distribution(cond, pos, prev)[id as usize].ln();
            prev = id;
        }
        Ok(total)
    }

    pub fn decode_greedy(&self, cond: Conditioning<'_>) -> Vec<String> {
        self.decode(cond, |d| argmax(d))
    }

    pub fn decode_sampled(&self, cond: Conditioning<'_>, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.decode(cond, |d| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, p) in d.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            d.len() - 1
        })
    }

    fn decode(&self, cond: Conditioning<'_>, mut pick: impl FnMut(&[f64]) -> usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut prev = BOS_ID;
        for pos in 0..self.config.max_len {
            let next = pick(self.distribution(cond, pos, prev)) as u32;
            if next == EOS_ID {
                break;
            }
            out.push(self.vocab.token(next).to_string());
            prev = next;
        }
        out
    }

    /// Every stored conditional, for invariant checks.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.exact
            .values()
            .chain(self.aligned.values())
            .chain(self.aligned_source.values())
            .chain(self.bigram.values())
            .map(Vec::as_slice)
            .chain(std::iter::once(self.unigram.as_slice()))
    }
}

#[derive(Serialize, Deserialize)]
struct SeqModelData {
    vocab: Vocab,
    config: SeqModelConfig,
    exact: Vec<(u64, u32, u32, Vec<f64>)>,
    aligned: Vec<(u64, u32, Vec<f64>)>,
    aligned_source: Vec<(u64, Vec<f64>)>,
    bigram: Vec<(u32, Vec<f64>)>,
    unigram: Vec<f64>,
}

impl From<SeqModel> for SeqModelData {
    fn from(m: SeqModel) -> Self {
        SeqModelData {
            exact: m.exact.into_iter().map(|((b, p, q), d)| (b, p, q, d)).collect(),
            aligned: m.aligned.into_iter().map(|((s, q), d)| (s, q, d)).collect(),
            aligned_source: m.aligned_source.into_iter().collect(),
            bigram: m.bigram.into_iter().collect(),
            unigram: m.unigram,
            vocab: m.vocab,
            config: m.config,
        }
    }
}

impl TryFrom<SeqModelData> for SeqModel {
    type Error = String;

    fn try_from(d: SeqModelData) -> std::result::Result<Self, Self::Error> {
        let v = d.vocab.len();
        let ok = |row: &Vec<f64>| row.len() == v && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        let all_ok = d.exact.iter().all(|r| ok(&r.3))
            && d.aligned.iter().all(|r| ok(&r.2))
            && d.aligned_source.iter().all(|r| ok(&r.1))
            && d.bigram.iter().all(|r| ok(&r.1))
            && ok(&d.unigram);
        if !all_ok {
            return Err("sequence model contains a malformed conditional".into());
        }
        Ok(SeqModel {
            exact: d.exact.into_iter().map(|(b, p, q, r)| ((b, p, q), r)).collect(),
            aligned: d.aligned.into_iter().map(|(s, q, r)| ((s, q), r)).collect(),
            aligned_source: d.aligned_source.into_iter().collect(),
            bigram: d.bigram.into_iter().collect(),
            unigram: d.unigram,
            vocab: d.vocab,
            config: d.config,
        })
    }
}
