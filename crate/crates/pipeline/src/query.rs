//! Intent classification and query enhancement.

use align_core::features::is_han;
use align_core::Lang;
use align_evalkit::{detect_language, CharSets};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::lexicon::{contains_term, is_latin_word, Lexicon};
use crate::memory::Session;
use crate::rules::{Action, RuleSet};

pub const MAX_SUBQUERIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Chitchat,
    Factual,
    Sensitive,
    ToolTask,
    Followup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhancedQuery {
    pub original: String,
    pub rewritten: String,
    pub subqueries: Vec<String>,
    pub lang: Lang,
}

/// Words of `text`: Latin/digit runs and Han runs with lexicon entries cut
/// out. Lowercased.
fn words(text: &str, drop: &[&[String]]) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut han_cut = lowered.clone();
    for list in drop {
        for w in list.iter().filter(|w| !is_latin_word(w)) {
            han_cut = han_cut.replace(w.as_str(), " ");
        }
    }
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_han = false;
    for c in han_cut.chars() {
        let han = is_han(c);
        if han || c.is_alphanumeric() {
            if !cur.is_empty() && han != cur_han {
                out.push(std::mem::take(&mut cur));
            }
            cur_han = han;
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out.retain(|w| !drop.iter().any(|l| l.iter().any(|d| d == w)));
    out
}

/// Content words of a query, space-joined, for lexical retrieval. Falls back
/// to the trimmed query when nothing survives.
pub fn search_terms(query: &str, lexicon: &Lexicon) -> String {
    let w = words(query, &[&lexicon.stopwords, &lexicon.interrogatives]);
    if w.is_empty() {
        query.trim().to_string()
    } else {
        w.join(" ")
    }
}

fn has_any(lowered: &str, terms: &[String]) -> bool {
    terms.iter().any(|t| contains_term(lowered, t))
}

/// First tool whose verb occurs in the query.
pub fn tool_for(query: &str, lexicon: &Lexicon) -> Option<String> {
    let lowered = query.to_lowercase();
    lexicon.tool_verbs.iter().find(|(v, _)| contains_term(&lowered, v)).map(|(_, t)| t.clone())
}

/// Priority: sensitive > followup > tool_task > factual > chitchat.
pub fn classify_intent(query: &str, session: &Session, rules: &RuleSet, lexicon: &Lexicon) -> Intent {
    let lowered = query.to_lowercase();
    if rules.rules().iter().any(|r| r.action != Action::Allow && r.matches(query, &lowered)) {
        return Intent::Sensitive;
    }
    if !session.turns.is_empty() && (has_any(&lowered, &lexicon.anaphora) || has_any(&lowered, &lexicon.followup_cues)) {
        return Intent::Followup;
    }
    if tool_for(query, lexicon).is_some() {
        return Intent::ToolTask;
    }
    let question = query.contains('?') || query.contains('？') || has_any(&lowered, &lexicon.interrogatives);
    let content = words(query, &[&lexicon.chitchat, &lexicon.stopwords, &lexicon.interrogatives]);
    if question || !content.is_empty() {
        return Intent::Factual;
    }
    Intent::Chitchat
}

/// Salient words of the most recent turn's query.
fn salient(session: &Session, lexicon: &Lexicon) -> Option<String> {
    let last = session.turns.iter().rev().find(|t| !t.refused)?;
    let w = words(
        &last.query,
        &[&lexicon.stopwords, &lexicon.interrogatives, &lexicon.chitchat, &lexicon.anaphora, &lexicon.followup_cues],
    );
    (!w.is_empty()).then(|| w.join(" "))
}

fn substitute(query: &str, marker: &str, replacement: &str) -> String {
    if is_latin_word(marker) {
        let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(marker))).expect("escaped marker");
        re.replace_all(query, regex::NoExpand(replacement)).into_owned()
    } else {
        query.replace(marker, replacement)
    }
}

fn conjunctions() -> Regex {
    Regex::new(r"(?i)\s+(?:and|or|as well as)\s+|以及|同埋|還有|还有").expect("static pattern")
}

/// Splits at conjunctions outside brackets and quotes, at most
/// `MAX_SUBQUERIES` parts, carrying a trailing question mark to each part.
pub fn split_subqueries(text: &str) -> Vec<String> {
    let trimmed = text.trim();
    let (body, mark) = match trimmed.chars().last() {
        Some(c @ ('?' | '？')) => (&trimmed[..trimmed.len() - c.len_utf8()], Some(c)),
        _ => (trimmed, None),
    };
    let mut depth: i32 = 0;
    let mut quoted = false;
    let mut depth_at = vec![0i32; body.len() + 1];
    for (i, c) in body.char_indices() {
        depth_at[i] = if quoted { depth + 1 } else { depth };
        match c {
            '(' | '[' | '{' | '（' | '「' | '『' => depth += 1,
            ')' | ']' | '}' | '）' | '」' | '』' => depth = (depth - 1).max(0),
            '"' => quoted = !quoted,
            _ => {}
        }
    }
    let mut parts = Vec::new();
    let mut start = 0;
    for m in conjunctions().find_iter(body) {
        if parts.len() == MAX_SUBQUERIES - 1 {
            break;
        }
        if depth_at[m.start()] != 0 {
            continue;
        }
        parts.push(&body[start..m.start()]);
        start = m.end();
    }
    parts.push(&body[start..]);
    let out: Vec<String> = parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match mark {
            Some(m) if !p.ends_with(['?', '？']) => format!("{p}{m}"),
            _ => p.to_string(),
        })
        .collect();
    if out.is_empty() {
        vec![trimmed.to_string()]
    } else {
        out
    }
}

pub fn enhance(query: &str, session: &Session, lexicon: &Lexicon, sets: &CharSets) -> EnhancedQuery {
    let mut rewritten = query.trim().to_string();
    if let Some(s) = salient(session, lexicon) {
        let lowered = rewritten.to_lowercase();
        for marker in lexicon.anaphora.iter().filter(|m| contains_term(&lowered, m)) {
            rewritten = substitute(&rewritten, marker, &s);
        }
    }
    if rewritten.is_empty() {
        rewritten = query.to_string();
    }
    let subqueries = split_subqueries(&rewritten);
    EnhancedQuery { original: query.to_string(), rewritten, subqueries, lang: detect_language(query, sets) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        assert_eq!(split_subqueries("X and Y?"), ["X?", "Y?"]);
        assert_eq!(split_subqueries("What is the MTR"), ["What is the MTR"]);
        assert_eq!(split_subqueries("a and b and c and d and e"), ["a", "b", "c", "d and e"]);
        assert_eq!(split_subqueries("compare (tea and coffee) prices?"), ["compare (tea and coffee) prices?"]);
        assert_eq!(split_subqueries("天氣以及交通？"), ["天氣？", "交通？"]);
        assert_eq!(split_subqueries("brand \"Salt and Pepper\" or rivals"), ["brand \"Salt and Pepper\"", "rivals"]);
    }

    #[test]
    fn words_drop_lexicon_entries() {
        let lx = Lexicon::default();
        assert_eq!(words("What is the Basic Law?", &[&lx.stopwords, &lx.interrogatives]), ["basic", "law"]);
        assert_eq!(words("香港的最低工資是多少", &[&lx.stopwords, &lx.interrogatives]), ["香港", "最低工資"]);
    }
}
