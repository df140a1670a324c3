//! External knowledge sources behind a small search contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RetrievalError};
use crate::index::Source;
use crate::tokenize::tokenize;
use crate::ScoredChunk;

pub trait ExternalSearch: Send + Sync {
    fn id(&self) -> &str;
    fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredChunk>>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalHit {
    pub doc_id: String,
    pub score: f64,
    pub snippet: String,
}

impl From<ExternalHit> for ScoredChunk {
    fn from(h: ExternalHit) -> Self {
        ScoredChunk { doc_id: h.doc_id, score: h.score, snippet: h.snippet, source: Source::External }
    }
}

/// Canned results keyed by the query's token sequence, so spacing and case
/// differences hit the same entry.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearch {
    results: BTreeMap<String, Vec<ExternalHit>>,
}

impl FixtureSearch {
    fn key(query: &str) -> String {
        tokenize(query).join(" ")
    }

    pub fn new(entries: impl IntoIterator<Item = (String, Vec<ExternalHit>)>) -> Self {
        FixtureSearch { results: entries.into_iter().map(|(q, h)| (Self::key(&q), h)).collect() }
    }

    /// JSON object mapping query text to a hit list.
    pub fn load(path: &Path) -> Result<Self> {
        let raw: BTreeMap<String, Vec<ExternalHit>> = serde_json::from_slice(&fs::read(path)?)?;
        Ok(Self::new(raw))
    }
}

impl ExternalSearch for FixtureSearch {
    fn id(&self) -> &str {
        "fixture"
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredChunk>> {
        Ok(self
            .results
            .get(&Self::key(query))
            .map(|hits| hits.iter().take(k).cloned().map(ScoredChunk::from).collect())
            .unwrap_or_default())
    }
}

/// `GET {endpoint}?q=<query>&k=<k>` returning `{"results": [{doc_id, score, snippet}]}`.
pub struct HttpSearch {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct HttpResponse {
    results: Vec<ExternalHit>,
}

impl HttpSearch {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        HttpSearch { endpoint: endpoint.into(), agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

impl ExternalSearch for HttpSearch {
    fn id(&self) -> &str {
        &self.endpoint
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredChunk>> {
        let resp: HttpResponse = self
            .agent
            .get(&self.endpoint)
            .query("q", query)
            .query("k", &k.to_string())
            .call()
            .map_err(|e| RetrievalError::External(e.to_string()))?
            .into_json()
            .map_err(|e| RetrievalError::External(e.to_string()))?;
        let mut hits: Vec<ScoredChunk> = resp.results.into_iter().map(ScoredChunk::from).collect();
        if let Some(bad) = hits.iter().find(|h| !h.score.is_finite()) {
            return Err(RetrievalError::External(format!("non-finite score for {}", bad.doc_id)));
        }
        hits.truncate(k);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_lookup_ignores_case_and_spacing() {
        let f = FixtureSearch::new([(
            "Hong Kong weather".to_string(),
            vec![ExternalHit { doc_id: "w1".into(), score: 3.0, snippet: "sunny".into() }],
        )]);
        let hits = f.search("  hong   KONG weather?", 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].source, Source::External);
        assert!(f.search("other", 5).unwrap().is_empty());
    }

    #[test]
    fn http_error_is_reported() {
        let s = HttpSearch::new("http://127.0.0.1:9/search", Duration::from_millis(200));
        assert!(matches!(s.search("x", 1), Err(RetrievalError::External(_))));
    }
}
