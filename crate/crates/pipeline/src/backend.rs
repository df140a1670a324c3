//! Answer generation backends.

use std::time::Duration;

use align_core::Lang;
use align_retrieval::ScoredChunk;
use serde::Deserialize;

pub struct GenerationRequest<'a> {
    pub system_instructions: &'a str,
    pub memory: &'a str,
    pub context: &'a [ScoredChunk],
    pub query: &'a str,
    pub lang: Lang,
    pub cautious: bool,
}

pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<String, String>;
}

/// Deterministic stand-in that lays the supplied snippets out verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl GenerationBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<String, String> {
        let mode = if req.cautious { "cautious" } else { "standard" };
        let turns = req.memory.matches("User: ").count();
        let mut out = format!("[mock] Q: {}\n[mock] mode: {mode}; lang: {}; memory: {turns} turn(s)\n", req.query, req.lang);
        if req.context.is_empty() {
            out.push_str("(no sources)\n");
        }
        for (i, c) in req.context.iter().enumerate() {
            out.push_str(&format!("[{}] {}: {}\n", i + 1, c.doc_id, c.snippet));
        }
        Ok(out)
    }
}

/// `POST {url}` with the request as JSON; expects `{"text": "..."}`.
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpBackend { url: url.into(), agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

#[derive(Deserialize)]
struct HttpReply {
    text: String,
}

impl GenerationBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.url
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<String, String> {
        let context: Vec<_> =
            req.context.iter().map(|c| serde_json::json!({"doc_id": c.doc_id, "snippet": c.snippet})).collect();
        let body = serde_json::json!({
            "system": req.system_instructions,
            "memory": req.memory,
            "context": context,
            "query": req.query,
            "lang": req.lang,
        });
        let reply: HttpReply =
            self.agent.post(&self.url).send_json(body).map_err(|e| e.to_string())?.into_json().map_err(|e| e.to_string())?;
        Ok(reply.text)
    }
}
