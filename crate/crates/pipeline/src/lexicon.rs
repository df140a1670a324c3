//! Word lists that drive intent classification and query enhancement.

use std::collections::BTreeMap;

fn list(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    /// Pronoun-like markers; substituted during enhancement.
    pub anaphora: Vec<String>,
    /// Phrases that mark a follow-up without naming a referent.
    pub followup_cues: Vec<String>,
    pub interrogatives: Vec<String>,
    pub chitchat: Vec<String>,
    pub stopwords: Vec<String>,
    /// Verb → tool name.
    pub tool_verbs: BTreeMap<String, String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            anaphora: list(&[
                "it", "that", "this", "they", "them", "those", "these", "佢哋", "佢", "它們", "它", "他們", "這個", "那個",
                "嗰個", "呢個", "这个", "那个",
            ]),
            followup_cues: list(&[
                "what about", "how about", "and the", "the second one", "the first one", "the other one", "咁", "另外", "那麼",
                "那么",
            ]),
            interrogatives: list(&[
                "what", "who", "when", "where", "why", "how", "which", "whose", "is", "are", "does", "do", "can", "could",
                "should", "什麼", "甚麼", "什么", "點解", "點樣", "邊個", "邊度", "幾時", "幾多", "哪", "誰", "谁", "嗎", "吗",
                "咩", "怎樣", "怎么", "如何", "為什麼", "为什么", "多少",
            ]),
            chitchat: list(&[
                "hi", "hello", "hey", "there", "thanks", "thank", "you", "bye", "goodbye", "good", "morning", "afternoon",
                "evening", "night", "ok", "okay", "cool", "great", "nice", "你好", "您好", "早晨", "早安", "多謝", "唔該", "謝謝",
                "谢谢", "拜拜", "再見", "再见", "哈囉",
            ]),
            stopwords: list(&[
                "the", "a", "an", "of", "in", "on", "for", "to", "and", "or", "was", "were", "be", "me", "tell", "about",
                "please", "does", "did", "my", "your", "i", "的", "是", "請", "告訴我", "我", "你", "呢", "啊", "了", "在", "有",
            ]),
            tool_verbs: [("calculate", "calculator"), ("compute", "calculator"), ("計算", "calculator"), ("计算", "calculator")]
                .into_iter()
                .map(|(v, t)| (v.to_string(), t.to_string()))
                .collect(),
        }
    }
}

pub fn is_latin_word(w: &str) -> bool {
    w.chars().all(|c| c.is_ascii_alphanumeric() || c == ' ' || c == '\'')
}

/// Whole-word match for Latin entries, substring match for Han entries.
pub fn contains_term(lowered: &str, term: &str) -> bool {
    if !is_latin_word(term) {
        return lowered.contains(term);
    }
    let bytes = lowered.as_bytes();
    let mut from = 0;
    while let Some(i) = lowered[from..].find(term) {
        let start = from + i;
        let end = start + term.len();
        let left = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left && right {
            return true;
        }
        from = start + 1;
    }
    false
}
