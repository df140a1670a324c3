//! Moderation rules: literal phrases and anchored regular expressions.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Allow,
    Refuse,
    Flag,
}

impl Action {
    /// Lower sorts first: refuse, flag, allow.
    pub fn rank(self) -> u8 {
        match self {
            Action::Refuse => 0,
            Action::Flag => 1,
            Action::Allow => 2,
        }
    }
}

/// On disk a pattern is a string; the prefix `re:` marks a regular
/// expression, anything else is a case-insensitive literal.
#[derive(Debug, Clone)]
pub enum Pattern {
    Literal(String),
    Regex(Regex),
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Self, String> {
        match raw.strip_prefix("re:") {
            Some(src) => {
                if !["^", "$", "\\b", "\\A", "\\z"].iter().any(|a| src.contains(a)) {
                    return Err(format!("regex {src:?} has no anchor (^, $, \\b, \\A or \\z)"));
                }
                Regex::new(src).map(Pattern::Regex).map_err(|e| e.to_string())
            }
            None if raw.trim().is_empty() => Err("empty literal pattern".into()),
            None => Ok(Pattern::Literal(raw.to_lowercase())),
        }
    }

    pub fn matches(&self, text: &str, lowered: &str) -> bool {
        match self {
            Pattern::Literal(l) => lowered.contains(l.as_str()),
            Pattern::Regex(r) => r.is_match(text),
        }
    }

    fn source(&self) -> String {
        match self {
            Pattern::Literal(l) => l.clone(),
            Pattern::Regex(r) => format!("re:{}", r.as_str()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleRow {
    pub id: String,
    pub category: String,
    pub patterns: Vec<String>,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PolicyRule {
    pub id: String,
    pub category: String,
    pub patterns: Vec<Pattern>,
    pub action: Action,
    pub template_id: Option<String>,
}

impl PolicyRule {
    pub fn matches(&self, text: &str, lowered: &str) -> bool {
        self.patterns.iter().any(|p| p.matches(text, lowered))
    }

    pub fn to_row(&self) -> RuleRow {
        RuleRow {
            id: self.id.clone(),
            category: self.category.clone(),
            patterns: self.patterns.iter().map(Pattern::source).collect(),
            action: self.action,
            template_id: self.template_id.clone(),
        }
    }
}

/// Validated rules in evaluation order plus the refusal templates they use.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<PolicyRule>,
    templates: BTreeMap<String, String>,
    default_template: String,
}

impl RuleSet {
    pub fn new(rows: Vec<RuleRow>, templates: BTreeMap<String, String>, default_template: &str) -> Result<Self, ConfigError> {
        if !templates.contains_key(default_template) {
            return Err(ConfigError::Rule { rule: "-".into(), message: format!("default template {default_template} missing") });
        }
        let mut ids = HashSet::new();
        let mut rules = Vec::with_capacity(rows.len());
        for row in rows {
            let err = |message: String| ConfigError::Rule { rule: row.id.clone(), message };
            if !ids.insert(row.id.clone()) {
                return Err(err("duplicate rule id".into()));
            }
            if row.patterns.is_empty() {
                return Err(err("no patterns".into()));
            }
            match (&row.template_id, row.action) {
                (None, Action::Refuse) => return Err(err("refuse rules need a template_id".into())),
                (Some(t), _) if !templates.contains_key(t) => return Err(err(format!("unknown template {t}"))),
                _ => {}
            }
            let patterns = row.patterns.iter().map(|p| Pattern::parse(p)).collect::<Result<Vec<_>, _>>().map_err(err)?;
            rules.push(PolicyRule { id: row.id, category: row.category, patterns, action: row.action, template_id: row.template_id });
        }
        rules.sort_by(|a, b| a.action.rank().cmp(&b.action.rank()).then(a.id.cmp(&b.id)));
        let set = RuleSet { rules, templates, default_template: default_template.to_string() };
        for (id, text) in &set.templates {
            let lowered = text.to_lowercase();
            if let Some(r) = set.rules.iter().find(|r| r.action != Action::Allow && r.matches(text, &lowered)) {
                return Err(ConfigError::TemplateTripsRule { id: id.clone(), rule: r.id.clone() });
            }
        }
        Ok(set)
    }

    /// Rules from JSON lines and templates from a JSON object.
    pub fn load(rules_path: &Path, templates_path: &Path, default_template: &str) -> Result<Self, ConfigError> {
        let file_err = |p: &Path, m: String| ConfigError::File { path: p.display().to_string(), message: m };
        let text = fs::read_to_string(rules_path).map_err(|e| file_err(rules_path, e.to_string()))?;
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| file_err(rules_path, format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<RuleRow>, _>>()?;
        let raw = fs::read(templates_path).map_err(|e| file_err(templates_path, e.to_string()))?;
        let templates = serde_json::from_slice(&raw).map_err(|e| file_err(templates_path, e.to_string()))?;
        Self::new(rows, templates, default_template)
    }

    pub fn rules(&self) -> &[PolicyRule] {
        &self.rules
    }

    pub fn templates(&self) -> &BTreeMap<String, String> {
        &self.templates
    }

    pub fn template(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn default_template_id(&self) -> &str {
        &self.default_template
    }

    pub fn is_template(&self, text: &str) -> bool {
        self.templates.values().any(|t| t == text)
    }
}
