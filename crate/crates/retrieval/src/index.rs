use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use align_core::Lang;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Result, RetrievalError};
use crate::tokenize::{tokenize, tokenize_spans};
use crate::ScoredChunk;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SNIPPET_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Local,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub lang: Lang,
    #[serde(default)]
    pub source: Source,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            title: String::new(),
            text: text.into(),
            lang: Lang::Unknown,
            source: Source::Local,
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Immutable after construction. Documents are stored in ascending id order
/// and postings refer to them by position, so a posting list sorted by
/// position is also sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    pub format_version: u32,
    pub params: Bm25Params,
    pub doc_count: usize,
    pub avg_len: f64,
    pub doc_len: Vec<u32>,
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub docs: Vec<Document>,
}

pub fn build_index(docs: &[Document]) -> Result<InvertedIndex> {
    build_index_with(docs, Bm25Params::default())
}

pub fn build_index_with(docs: &[Document], params: Bm25Params) -> Result<InvertedIndex> {
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.id.as_str()) {
            return Err(RetrievalError::DuplicateId(d.id.clone()));
        }
        if d.text.trim().is_empty() {
            return Err(RetrievalError::EmptyText(d.id.clone()));
        }
    }
    let mut sorted: Vec<Document> = docs.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut doc_len = Vec::with_capacity(sorted.len());
    for (pos, d) in sorted.iter().enumerate() {
        let tokens = tokenize(&d.text);
        doc_len.push(tokens.len() as u32);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, n) in tf {
            postings.entry(term).or_default().push((pos as u32, n));
        }
    }
    let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
    let avg_len = if sorted.is_empty() { 0.0 } else { total as f64 / sorted.len() as f64 };
    Ok(InvertedIndex { format_version: FORMAT_VERSION, params, doc_count: sorted.len(), avg_len, doc_len, postings, docs: sorted })
}

/// Reads `{id, title, text, lang, metadata}` JSON lines.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| RetrievalError::Corpus { line: i + 1, source }))
        .collect()
}

impl InvertedIndex {
    fn position(&self, doc_id: &str) -> Option<usize> {
        self.docs.binary_search_by(|d| d.id.as_str().cmp(doc_id)).ok()
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.position(doc_id).map(|p| &self.docs[p])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N − n + 0.5)/(n + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq(term) as f64;
        (1.0 + (self.doc_count as f64 - n + 0.5) / (n + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, dl: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = if self.avg_len > 0.0 { dl as f64 / self.avg_len } else { 0.0 };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    fn tf(&self, term: &str, pos: u32) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&pos, |&(d, _)| d).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    /// BM25 over the query multiset; repeated terms count repeatedly.
    pub fn bm25_score(&self, query_terms: &[String], doc_id: &str) -> Result<f64> {
        let pos = self.position(doc_id).ok_or_else(|| RetrievalError::UnknownDocument(doc_id.to_string()))? as u32;
        let dl = self.doc_len[pos as usize];
        Ok(query_terms
            .iter()
            .map(|t| match self.tf(t, pos) {
                0 => 0.0,
                tf => self.term_weight(self.idf(t), tf, dl),
            })
            .sum())
    }

    /// Top `k` documents by BM25, descending, ties by ascending id. Documents
    /// scoring zero are left out.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredChunk>> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let terms = tokenize(query);
        let mut scores = vec![0.0; self.doc_count];
        for t in &terms {
            let Some(list) = self.postings.get(t) else { continue };
            let idf = self.idf(t);
            for &(pos, tf) in list {
                scores[pos as usize] += self.term_weight(idf, tf, self.doc_len[pos as usize]);
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().filter(|(_, s)| *s > 0.0).collect();
        // positions follow id order, so the secondary key is the position
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(pos, score)| {
                let d = &self.docs[pos];
                ScoredChunk { doc_id: d.id.clone(), score, snippet: snippet(&d.text, &terms, DEFAULT_SNIPPET_CHARS), source: d.source }
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_slice(&bytes)?;
        if header.format_version != FORMAT_VERSION {
            return Err(RetrievalError::FormatVersion { found: header.format_version, expected: FORMAT_VERSION });
        }
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// The earliest-starting window of `width` characters of the NFC text that
/// fully contains an occurrence of a query term. Falls back to the leading
/// window when no term occurs.
pub fn snippet(text: &str, query_terms: &[String], width: usize) -> String {
    let chars: Vec<char> = text.nfc().collect();
    let first_end = tokenize_spans(text)
        .into_iter()
        .filter(|t| query_terms.iter().any(|q| *q == t.text))
        .map(|t| t.end)
        .min()
        .unwrap_or(0);
    let start = first_end.saturating_sub(width);
    chars[start..(start + width).min(chars.len())].iter().collect()
}
