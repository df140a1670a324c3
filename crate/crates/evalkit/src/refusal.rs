use std::fs;
use std::path::Path;

use crate::error::Result;

const DEFAULT_PHRASES: &str = include_str!("../data/refusal_phrases.txt");

/// A response is a refusal iff its trimmed text equals one of the templates
/// or contains one of the phrases (case-insensitive).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefusalDetector {
    pub templates: Vec<String>,
    pub phrases: Vec<String>,
}

pub(crate) fn data_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

impl RefusalDetector {
    /// The bundled phrase list plus the given templates.
    pub fn with_templates(templates: impl IntoIterator<Item = String>) -> Self {
        RefusalDetector { templates: templates.into_iter().collect(), phrases: data_lines(DEFAULT_PHRASES) }
    }

    pub fn load_phrases(path: &Path) -> Result<Vec<String>> {
        Ok(data_lines(&fs::read_to_string(path)?))
    }

    pub fn is_template(&self, response: &str) -> bool {
        let r = response.trim();
        self.templates.iter().any(|t| t.trim() == r)
    }

    pub fn is_refusal(&self, response: &str) -> bool {
        if self.is_template(response) {
            return true;
        }
        let lower = response.to_lowercase();
        self.phrases.iter().any(|p| lower.contains(&p.to_lowercase()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_and_phrase_matching() {
        let d = RefusalDetector::with_templates(["抱歉，這個問題我不能回答。".to_string()]);
        assert!(d.is_refusal("  抱歉，這個問題我不能回答。\n"));
        assert!(d.is_refusal("Sorry, I CANNOT help with that request."));
        assert!(!d.is_refusal("The ordinance was passed in 2020."));
        assert!(!d.is_template("Sorry, I cannot help with that request."));
    }
}
