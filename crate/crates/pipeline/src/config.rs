//! `key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::ConfigError;
use crate::lexicon::Lexicon;
use crate::memory::DEFAULT_MEMORY_BUDGET;
use crate::tools::KNOWN_TOOLS;

pub const CONFIG_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// An index JSON file, or a `.jsonl` corpus indexed at load time.
    pub index_path: PathBuf,
    pub backend: BackendKind,
    pub backend_url: Option<String>,
    pub search_enabled: bool,
    pub rules_path: PathBuf,
    pub templates_path: PathBuf,
    pub memory_budget: usize,
    pub retrieve_k: usize,
    pub recall_k: usize,
    pub default_template_id: String,
    pub external_fixture: Option<PathBuf>,
    pub external_url: Option<String>,
    pub corrector_path: Option<PathBuf>,
    pub timeout_ms: u64,
    pub lexicon: Lexicon,
}

fn csv(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_lowercase()).filter(|s| !s.is_empty()).collect()
}

impl PipelineConfig {
    /// Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path, origin: &str) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { path: origin.to_string(), line: n + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected key = value".into()))?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), (n + 1, v.trim().to_string())).is_some() {
                return Err(syntax(format!("duplicate key {k}")));
            }
        }
        let version = kv.remove("version").map(|(_, v)| v).ok_or(ConfigError::Missing("version"))?;
        if version != CONFIG_VERSION {
            return Err(ConfigError::Version(version));
        }
        let path = |v: &str| base.join(v);
        let mut take = |k: &'static str| kv.remove(k).map(|(_, v)| v);
        let required = |v: Option<String>, k: &'static str| v.ok_or(ConfigError::Missing(k));

        let index_path = path(&required(take("index_path"), "index_path")?);
        let backend = match required(take("backend"), "backend")?.as_str() {
            "mock" => BackendKind::Mock,
            "http" => BackendKind::Http,
            other => return Err(ConfigError::File { path: origin.into(), message: format!("unknown backend {other}") }),
        };
        let backend_url = take("backend.url");
        if backend == BackendKind::Http && backend_url.is_none() {
            return Err(ConfigError::Missing("backend.url"));
        }
        let bad = |k: &str, v: &str| ConfigError::File { path: origin.into(), message: format!("bad value for {k}: {v}") };
        let parse_bool = |k: &str, v: Option<String>, d: bool| match v.as_deref() {
            None => Ok(d),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(o) => Err(bad(k, o)),
        };
        let parse_num = |k: &str, v: Option<String>, d: u64| match v {
            None => Ok(d),
            Some(s) => s.parse::<u64>().map_err(|_| bad(k, &s)),
        };
        let search_enabled = parse_bool("search_enabled", take("search_enabled"), false)?;
        let rules_path = path(&required(take("rules_path"), "rules_path")?);
        let templates_path = path(&required(take("templates_path"), "templates_path")?);
        let memory_budget = parse_num("memory_budget", take("memory_budget"), DEFAULT_MEMORY_BUDGET as u64)? as usize;
        let retrieve_k = parse_num("retrieve_k", take("retrieve_k"), 3)? as usize;
        let recall_k = parse_num("recall_k", take("recall_k"), 4)? as usize;
        let timeout_ms = parse_num("timeout_ms", take("timeout_ms"), 5000)?;
        if retrieve_k == 0 {
            return Err(bad("retrieve_k", "0"));
        }
        let default_template_id = take("default_template_id").unwrap_or_else(|| "default".into());
        let external_fixture = take("external_fixture").map(|p| path(&p));
        let external_url = take("external.url");
        let corrector_path = take("corrector_path").map(|p| path(&p));
        if search_enabled && external_fixture.is_none() && external_url.is_none() {
            return Err(ConfigError::Missing("external_fixture or external.url"));
        }

        let mut lexicon = Lexicon::default();
        for (k, (_, v)) in std::mem::take(&mut kv) {
            if let Some(verb) = k.strip_prefix("tool.") {
                if !KNOWN_TOOLS.contains(&v.as_str()) {
                    return Err(ConfigError::UnknownTool(v));
                }
                lexicon.tool_verbs.insert(verb.to_lowercase(), v);
                continue;
            }
            let slot = match k.as_str() {
                "lexicon.anaphora" => &mut lexicon.anaphora,
                "lexicon.followup_cues" => &mut lexicon.followup_cues,
                "lexicon.interrogatives" => &mut lexicon.interrogatives,
                "lexicon.chitchat" => &mut lexicon.chitchat,
                "lexicon.stopwords" => &mut lexicon.stopwords,
                _ => return Err(bad("unknown key", &k)),
            };
            *slot = csv(&v);
        }

        Ok(PipelineConfig {
            index_path,
            backend,
            backend_url,
            search_enabled,
            rules_path,
            templates_path,
            memory_budget,
            retrieve_k,
            recall_k,
            default_template_id,
            external_fixture,
            external_url,
            corrector_path,
            timeout_ms,
            lexicon,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), &path.display().to_string())
    }
}
