//! Tool planning and the built-in tools.

use serde::{Deserialize, Serialize};

use crate::query::{search_terms, tool_for, EnhancedQuery, Intent};
use crate::Lexicon;

pub const KNOWN_TOOLS: [&str; 1] = ["calculator"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolCall {
    LocalSearch { query: String },
    ExternalSearch { query: String },
    Tool { name: String, input: String },
}

pub fn plan_tools(intent: Intent, eq: &EnhancedQuery, search_enabled: bool, lexicon: &Lexicon) -> Vec<ToolCall> {
    match intent {
        Intent::Factual | Intent::Followup | Intent::Sensitive => {
            let mut calls: Vec<ToolCall> =
                eq.subqueries.iter().map(|q| ToolCall::LocalSearch { query: search_terms(q, lexicon) }).collect();
            if search_enabled {
                calls.extend(eq.subqueries.iter().map(|q| ToolCall::ExternalSearch { query: q.clone() }));
            }
            calls
        }
        Intent::ToolTask => match tool_for(&eq.rewritten, lexicon) {
            Some(name) => vec![ToolCall::Tool { name, input: eq.rewritten.clone() }],
            None => Vec::new(),
        },
        Intent::Chitchat => Vec::new(),
    }
}

pub fn run_tool(name: &str, input: &str) -> Result<String, String> {
    match name {
        "calculator" => calculator(input),
        other => Err(format!("unknown tool {other}")),
    }
}

/// Evaluates the longest arithmetic expression found in `input`.
pub fn calculator(input: &str) -> Result<String, String> {
    let allowed = |c: char| c.is_ascii_digit() || "+-*/(). ".contains(c);
    let mut best = "";
    let mut start = None;
    for (i, c) in input.char_indices().chain(std::iter::once((input.len(), '\0'))) {
        match (allowed(c) && c != '\0', start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let cand = input[s..i].trim();
                if cand.len() > best.len() && cand.chars().any(|c| c.is_ascii_digit()) {
                    best = cand;
                }
                start = None;
            }
            _ => {}
        }
    }
    if best.is_empty() {
        return Err("no arithmetic expression found".into());
    }
    let mut p = Parser { s: best.as_bytes(), i: 0 };
    let v = p.expr()?;
    p.skip_ws();
    if p.i != p.s.len() {
        return Err(format!("cannot parse {best:?}"));
    }
    if !v.is_finite() {
        return Err("result is not finite".into());
    }
    let shown = if v.fract() == 0.0 && v.abs() < 1e15 { format!("{}", v as i64) } else { format!("{v}") };
    Ok(format!("{best} = {shown}"))
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i] == b' ' {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.i).copied()
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut v = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let r = self.term()?;
            v = if op == b'+' { v + r } else { v - r };
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<f64, String> {
        let mut v = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.i += 1;
            let r = self.factor()?;
            if op == b'/' && r == 0.0 {
                return Err("division by zero".into());
            }
            v = if op == b'*' { v * r } else { v / r };
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'-') => {
                self.i += 1;
                Ok(-self.factor()?)
            }
            Some(b'(') => {
                self.i += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err("unbalanced parenthesis".into());
                }
                self.i += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.i;
                while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
                    self.i += 1;
                }
                std::str::from_utf8(&self.s[start..self.i]).expect("ascii").parse().map_err(|_| "bad number".to_string())
            }
            _ => Err("expected a number".into()),
        }
    }
}
