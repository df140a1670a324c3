//! Hashed bag-of-tokens featurizer.
//!
//! Response text is split into tokens: runs of alphanumeric non-Han
//! characters become lowercase words, and every Han ideograph is its own
//! token. Each token is hashed with 64-bit FNV-1a over its UTF-8 bytes and
//! lands in bucket `hash % dim`; the feature value is the token count in that
//! bucket. The prompt does not contribute features, so the reward of a
//! response depends only on the response text.

use serde::{Deserialize, Serialize};

use crate::math::fnv1a;
use crate::types::{Prompt, ResponseText};

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedBagFeaturizer {
    pub dim: usize,
}

impl Default for HashedBagFeaturizer {
    fn default() -> Self {
        HashedBagFeaturizer { dim: DEFAULT_DIM }
    }
}

impl HashedBagFeaturizer {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        HashedBagFeaturizer { dim }
    }

    pub fn id(&self) -> String {
        format!("fnv1a-bag-v1/d={}", self.dim)
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn featurize(&self, _prompt: &Prompt, response: &ResponseText) -> Vec<f64> {
        self.featurize_text(&response.text)
    }

    pub fn featurize_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in bag_tokens(text) {
            v[self.bucket(&tok)] += 1.0;
        }
        v
    }
}

/// CJK unified ideographs, extensions A-F and compatibility ideographs.
pub fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// Tokens used by the featurizer.
pub fn bag_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_han(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}
