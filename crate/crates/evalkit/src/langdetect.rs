//! Script-based language identification driven by versioned character sets.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use align_core::features::is_han;
use align_core::Lang;

use crate::error::Result;

const SIMPLIFIED: &str = include_str!("../data/simplified_only.txt");
const TRADITIONAL: &str = include_str!("../data/traditional_only.txt");
const CANTONESE: &str = include_str!("../data/cantonese_markers.txt");

/// Minority script share above which text counts as mixed.
pub const MIXED_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct CharSets {
    pub simplified_only: HashSet<char>,
    pub traditional_only: HashSet<char>,
    pub cantonese_markers: HashSet<char>,
    pub version: String,
}

fn parse_set(text: &str) -> (HashSet<char>, Option<String>) {
    let mut version = None;
    let mut set = HashSet::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("version:") {
                version = Some(v.trim().to_string());
            }
            continue;
        }
        set.extend(line.chars().filter(|c| !c.is_whitespace()));
    }
    (set, version)
}

impl CharSets {
    fn from_texts(simplified: &str, traditional: &str, cantonese: &str) -> Self {
        let (simplified_only, v1) = parse_set(simplified);
        let (traditional_only, v2) = parse_set(traditional);
        let (cantonese_markers, v3) = parse_set(cantonese);
        let version = [v1, v2, v3].map(|v| v.unwrap_or_else(|| "?".into())).join("/");
        CharSets { simplified_only, traditional_only, cantonese_markers, version }
    }

    /// Reads `simplified_only.txt`, `traditional_only.txt` and
    /// `cantonese_markers.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self::from_texts(
            &fs::read_to_string(dir.join("simplified_only.txt"))?,
            &fs::read_to_string(dir.join("traditional_only.txt"))?,
            &fs::read_to_string(dir.join("cantonese_markers.txt"))?,
        ))
    }
}

impl Default for CharSets {
    fn default() -> Self {
        Self::from_texts(SIMPLIFIED, TRADITIONAL, CANTONESE)
    }
}

/// Letters are split into Han, Latin and other scripts. A minority share
/// above [`MIXED_THRESHOLD`] gives `mixed`. Han text is classified by the
/// first matching rule: any simplified-only character, two or more
/// Cantonese markers, any traditional-only character. Han text matching none
/// of them is reported as traditional, the written standard in Hong Kong.
pub fn detect_language(text: &str, sets: &CharSets) -> Lang {
    let (mut han, mut latin, mut other) = (0usize, 0usize, 0usize);
    for c in text.chars() {
        if is_han(c) {
            han += 1;
        } else if c.is_ascii_alphabetic() || (c.is_alphabetic() && ('\u{00C0}'..='\u{024F}').contains(&c)) {
            latin += 1;
        } else if c.is_alphabetic() {
            other += 1;
        }
    }
    let total = han + latin + other;
    if total == 0 {
        return Lang::Unknown;
    }
    let major = han.max(latin).max(other);
    if (total - major) as f64 / total as f64 > MIXED_THRESHOLD {
        return Lang::Mixed;
    }
    if major == latin {
        return Lang::English;
    }
    if major == other {
        return Lang::Unknown;
    }
    if text.chars().any(|c| sets.simplified_only.contains(&c)) {
        return Lang::SimplifiedChinese;
    }
    if text.chars().filter(|c| sets.cantonese_markers.contains(c)).count() >= 2 {
        return Lang::CantoneseOral;
    }
    Lang::TraditionalChinese
}
