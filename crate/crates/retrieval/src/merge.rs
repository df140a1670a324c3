use std::collections::BTreeMap;

use crate::error::{Result, RetrievalError};
use crate::index::Source;
use crate::ScoredChunk;

fn min_max(chunks: &[ScoredChunk]) -> Vec<ScoredChunk> {
    let lo = chunks.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let hi = chunks.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    chunks
        .iter()
        .map(|c| ScoredChunk { score: if hi > lo { (c.score - lo) / (hi - lo) } else { 1.0 }, ..c.clone() })
        .collect()
}

/// Min-max normalizes each list, drops duplicate ids (keeping the higher
/// normalized score, local on a tie) and returns the top `k`.
pub fn merge_sources(local: &[ScoredChunk], external: &[ScoredChunk], k: usize) -> Result<Vec<ScoredChunk>> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let tag = |chunks: &[ScoredChunk], source: Source| -> Vec<ScoredChunk> {
        min_max(chunks).into_iter().map(|c| ScoredChunk { source, ..c }).collect()
    };
    let mut best: BTreeMap<String, ScoredChunk> = BTreeMap::new();
    for c in tag(local, Source::Local).into_iter().chain(tag(external, Source::External)) {
        match best.get(&c.doc_id) {
            Some(prev) if (prev.score, std::cmp::Reverse(prev.source)) >= (c.score, std::cmp::Reverse(c.source)) => {}
            _ => {
                best.insert(c.doc_id.clone(), c);
            }
        }
    }
    let mut out: Vec<ScoredChunk> = best.into_values().collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.source.cmp(&b.source)).then(a.doc_id.cmp(&b.doc_id)));
    out.truncate(k);
    Ok(out)
}
