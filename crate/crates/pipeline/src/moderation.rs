//! Input and output moderation over a [`RuleSet`].

use align_core::w2s::{correct, CorrectionModel};
use align_core::{Lang, Prompt, Provenance, ResponseText};
use serde::{Deserialize, Serialize};

use crate::rules::{Action, RuleSet};
use crate::Answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Output,
    OutputRecheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModerationVerdict {
    pub stage: Stage,
    pub decision: Action,
    pub matched_rule_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
}

/// The first matching rule in evaluation order decides; every match is
/// listed. No match allows.
pub fn moderate(text: &str, rules: &RuleSet, stage: Stage) -> ModerationVerdict {
    let lowered = text.to_lowercase();
    let matched: Vec<_> = rules.rules().iter().filter(|r| r.matches(text, &lowered)).collect();
    let (decision, template_id) = match matched.first() {
        Some(r) => (r.action, r.template_id.clone()),
        None => (Action::Allow, None),
    };
    ModerationVerdict { stage, decision, matched_rule_ids: matched.iter().map(|r| r.id.clone()).collect(), template_id }
}

pub fn moderate_input(query: &str, rules: &RuleSet) -> ModerationVerdict {
    moderate(query, rules, Stage::Input)
}

/// Rewrites a flagged draft.
pub trait Corrector: Send + Sync {
    fn correct(&self, query: &str, draft: &str) -> String;
}

impl Corrector for CorrectionModel {
    fn correct(&self, query: &str, draft: &str) -> String {
        let Ok(prompt) = Prompt::new("moderation", query, Lang::Unknown) else {
            return draft.to_string();
        };
        let Ok(original) = ResponseText::new("draft", &prompt, draft, Provenance::Base) else {
            return draft.to_string();
        };
        correct(self, &prompt, &original).text
    }
}

impl<F: Fn(&str, &str) -> String + Send + Sync> Corrector for F {
    fn correct(&self, query: &str, draft: &str) -> String {
        self(query, draft)
    }
}

fn refuse_with(mut answer: Answer, rules: &RuleSet, template_id: Option<&str>) -> Answer {
    let id = template_id.unwrap_or(rules.default_template_id());
    answer.text = rules.template(id).unwrap_or_else(|| rules.template(rules.default_template_id()).expect("validated")).to_string();
    answer.citations.clear();
    answer
}

/// Refuse replaces the text with the rule's template. Flag with a corrector
/// rewrites the text and checks it once more; anything but allow on the
/// second pass falls back to a template. Every pass appends its verdict.
pub fn moderate_output(draft: Answer, query: &str, rules: &RuleSet, corrector: Option<&dyn Corrector>) -> Answer {
    let first = moderate(&draft.text, rules, Stage::Output);
    let mut answer = draft;
    answer.moderation_trail.push(first.clone());
    match (first.decision, corrector) {
        (Action::Refuse, _) => refuse_with(answer, rules, first.template_id.as_deref()),
        (Action::Flag, Some(c)) => {
            let rewritten = c.correct(query, &answer.text);
            let second = moderate(&rewritten, rules, Stage::OutputRecheck);
            answer.moderation_trail.push(second.clone());
            match second.decision {
                Action::Allow => {
                    answer.text = rewritten;
                    answer
                }
                Action::Refuse => refuse_with(answer, rules, second.template_id.as_deref()),
                Action::Flag => refuse_with(answer, rules, second.template_id.as_deref()),
            }
        }
        _ => answer,
    }
}
