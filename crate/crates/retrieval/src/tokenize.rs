use align_core::features::is_han;
use unicode_normalization::UnicodeNormalization;

/// A token with its character span `[start, end)` in the NFC-normalized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Tokens in emission order. Non-Han alphanumeric runs become lowercased
/// words. A run of Han characters emits every character, then every
/// adjacent pair.
pub fn tokenize_spans(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.nfc().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_han(c) {
            let start = i;
            while i < chars.len() && is_han(chars[i]) {
                i += 1;
            }
            for j in start..i {
                out.push(Token { text: chars[j].to_string(), start: j, end: j + 1 });
            }
            for j in start..i.saturating_sub(1) {
                out.push(Token { text: chars[j..j + 2].iter().collect(), start: j, end: j + 2 });
            }
        } else if c.is_alphanumeric() {
            let start = i;
            let mut word = String::new();
            while i < chars.len() && chars[i].is_alphanumeric() && !is_han(chars[i]) {
                word.extend(chars[i].to_lowercase());
                i += 1;
            }
            out.push(Token { text: word, start, end: i });
        } else {
            i += 1;
        }
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.text).collect()
}
