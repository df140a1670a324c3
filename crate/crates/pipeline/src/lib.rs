//! Moderated retrieval-augmented answering.
//!
//! A query passes input moderation, intent classification, query
//! enhancement, short-term memory recall, tool planning, retrieval over the
//! local index (plus an optional external source), generation and output
//! moderation. With the mock backend the whole run is byte-deterministic.

pub mod backend;
pub mod config;
mod error;
pub mod lexicon;
pub mod memory;
pub mod moderation;
pub mod query;
pub mod rules;
pub mod tools;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use align_core::w2s::CorrectionModel;
use align_core::Lang;
use align_evalkit::CharSets;
use align_retrieval::{build_index, load_corpus, merge_sources, ExternalSearch, FixtureSearch, HttpSearch, InvertedIndex, ScoredChunk, Source};
use serde::{Deserialize, Serialize};

pub use backend::{GenerationBackend, GenerationRequest, HttpBackend, MockBackend};
pub use config::{BackendKind, PipelineConfig};
pub use error::{ConfigError, PipelineError};
pub use lexicon::Lexicon;
pub use memory::{recall, Session, Turn};
pub use moderation::{moderate_input, moderate_output, Corrector, ModerationVerdict, Stage};
pub use query::{classify_intent, enhance, search_terms, EnhancedQuery, Intent};
pub use rules::{Action, PolicyRule, RuleRow, RuleSet};
pub use tools::{plan_tools, ToolCall};

pub const BASE_INSTRUCTIONS: &str =
    "You are a Hong Kong public-information assistant. Answer from the numbered sources and cite them.";
pub const SAFETY_INSTRUCTIONS: &str =
    "This request touches a sensitive topic. Stay factual and neutral, follow Hong Kong law, and do not speculate.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub citations: Vec<String>,
    pub lang: Lang,
    pub moderation_trail: Vec<ModerationVerdict>,
    pub backend_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intent: Option<Intent>,
}

pub struct Pipeline {
    pub index: Arc<InvertedIndex>,
    pub rules: RuleSet,
    pub backend: Box<dyn GenerationBackend>,
    pub external: Option<Box<dyn ExternalSearch>>,
    pub corrector: Option<Box<dyn Corrector>>,
    pub lexicon: Lexicon,
    pub charsets: CharSets,
    pub retrieve_k: usize,
    pub recall_k: usize,
    pub memory_budget: usize,
}

impl Pipeline {
    /// Mock backend, no external search, no corrector.
    pub fn new(index: InvertedIndex, rules: RuleSet) -> Self {
        Pipeline {
            index: Arc::new(index),
            rules,
            backend: Box::new(MockBackend),
            external: None,
            corrector: None,
            lexicon: Lexicon::default(),
            charsets: CharSets::default(),
            retrieve_k: 3,
            recall_k: 4,
            memory_budget: memory::DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        let file_err = |p: &std::path::Path, m: String| ConfigError::File { path: p.display().to_string(), message: m };
        let index = if cfg.index_path.extension().is_some_and(|e| e == "jsonl") {
            let docs = load_corpus(&cfg.index_path).map_err(|e| file_err(&cfg.index_path, e.to_string()))?;
            build_index(&docs).map_err(|e| file_err(&cfg.index_path, e.to_string()))?
        } else {
            InvertedIndex::load(&cfg.index_path).map_err(|e| file_err(&cfg.index_path, e.to_string()))?
        };
        let rules = RuleSet::load(&cfg.rules_path, &cfg.templates_path, &cfg.default_template_id)?;
        let timeout = Duration::from_millis(cfg.timeout_ms);
        let backend: Box<dyn GenerationBackend> = match cfg.backend {
            BackendKind::Mock => Box::new(MockBackend),
            BackendKind::Http => Box::new(HttpBackend::new(cfg.backend_url.clone().expect("checked at parse"), timeout)),
        };
        let external: Option<Box<dyn ExternalSearch>> = match (&cfg.external_fixture, &cfg.external_url) {
            _ if !cfg.search_enabled => None,
            (Some(p), _) => Some(Box::new(FixtureSearch::load(p).map_err(|e| file_err(p, e.to_string()))?)),
            (None, Some(u)) => Some(Box::new(HttpSearch::new(u.clone(), timeout))),
            (None, None) => None,
        };
        let corrector: Option<Box<dyn Corrector>> = match &cfg.corrector_path {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| file_err(p, e.to_string()))?;
                let model: CorrectionModel = serde_json::from_slice(&bytes).map_err(|e| file_err(p, e.to_string()))?;
                Some(Box::new(model))
            }
            None => None,
        };
        Ok(Pipeline {
            index: Arc::new(index),
            rules,
            backend,
            external,
            corrector,
            lexicon: cfg.lexicon.clone(),
            charsets: CharSets::default(),
            retrieve_k: cfg.retrieve_k,
            recall_k: cfg.recall_k,
            memory_budget: cfg.memory_budget,
        })
    }

    pub fn new_session(&self, id: impl Into<String>) -> Session {
        Session::new(id, self.memory_budget)
    }

    /// Best score per document across several result lists; the first list
    /// wins a tie.
    fn union(lists: Vec<Vec<ScoredChunk>>) -> Vec<ScoredChunk> {
        let mut best: BTreeMap<String, ScoredChunk> = BTreeMap::new();
        for c in lists.into_iter().flatten() {
            match best.get(&c.doc_id) {
                Some(prev) if prev.score >= c.score => {}
                _ => {
                    best.insert(c.doc_id.clone(), c);
                }
            }
        }
        best.into_values().collect()
    }

    fn gather(&self, calls: &[ToolCall]) -> Result<Vec<ScoredChunk>, PipelineError> {
        let mut local = Vec::new();
        let mut external = Vec::new();
        let mut tool_chunks = Vec::new();
        for call in calls {
            match call {
                ToolCall::LocalSearch { query } => local.push(
                    self.index.retrieve(query, self.retrieve_k).map_err(|e| PipelineError::new("retrieve", e.to_string()))?,
                ),
                ToolCall::ExternalSearch { query } => {
                    if let Some(ext) = &self.external {
                        external.push(
                            ext.search(query, self.retrieve_k).map_err(|e| PipelineError::new("external_search", e.to_string()))?,
                        );
                    }
                }
                ToolCall::Tool { name, input } => {
                    let out = tools::run_tool(name, input).map_err(|e| PipelineError::new("tool", format!("{name}: {e}")))?;
                    tool_chunks.push(ScoredChunk { doc_id: format!("tool:{name}"), score: 1.0, snippet: out, source: Source::Local });
                }
            }
        }
        let mut chunks = if local.is_empty() && external.is_empty() {
            Vec::new()
        } else {
            merge_sources(&Self::union(local), &Self::union(external), self.retrieve_k)
                .map_err(|e| PipelineError::new("merge", e.to_string()))?
        };
        chunks.extend(tool_chunks);
        Ok(chunks)
    }

    /// Runs one turn. On error the session is left untouched.
    pub fn run(&self, session: &mut Session, query: &str) -> Result<Answer, PipelineError> {
        let input = moderate_input(query, &self.rules);
        let lang = align_evalkit::detect_language(query, &self.charsets);
        if input.decision == Action::Refuse {
            let template_id = input.template_id.clone().unwrap_or_else(|| self.rules.default_template_id().to_string());
            let draft = Answer {
                text: self.rules.template(&template_id).expect("validated template").to_string(),
                citations: Vec::new(),
                lang,
                moderation_trail: vec![input],
                backend_id: "moderation".into(),
                intent: None,
            };
            let answer = moderate_output(draft, query, &self.rules, None);
            session.push_refused(query, answer.text.clone());
            return Ok(answer);
        }

        let intent = classify_intent(query, session, &self.rules, &self.lexicon);
        let eq = enhance(query, session, &self.lexicon, &self.charsets);
        let memory = recall(session, self.recall_k);
        let calls = plan_tools(intent, &eq, self.external.is_some(), &self.lexicon);
        let chunks = self.gather(&calls)?;

        let cautious = input.decision == Action::Flag;
        let mut system = BASE_INSTRUCTIONS.to_string();
        if cautious {
            system = format!("{SAFETY_INSTRUCTIONS}\n{system}");
        }
        let text = self
            .backend
            .generate(&GenerationRequest {
                system_instructions: &system,
                memory: &memory,
                context: &chunks,
                query: &eq.rewritten,
                lang: eq.lang,
                cautious,
            })
            .map_err(|e| PipelineError::new("generate", e))?;
        let draft = Answer {
            text,
            citations: chunks.iter().map(|c| c.doc_id.clone()).collect(),
            lang: eq.lang,
            moderation_trail: vec![input],
            backend_id: self.backend.id().to_string(),
            intent: Some(intent),
        };
        let answer = moderate_output(draft, query, &self.rules, self.corrector.as_deref());
        session.push(query, answer.text.clone());
        Ok(answer)
    }
}

/// Free-function form of [`Pipeline::run`].
pub fn run_pipeline(session: &mut Session, query: &str, pipeline: &Pipeline) -> Result<Answer, PipelineError> {
    pipeline.run(session, query)
}
