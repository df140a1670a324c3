use serde::{Deserialize, Serialize};

pub const DEFAULT_MEMORY_BUDGET: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub answer: String,
    /// Input moderation refused this turn; it is never used as a referent.
    #[serde(default)]
    pub refused: bool,
}

/// Short-term memory: at most `memory_budget` most recent turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub turns: Vec<Turn>,
    pub memory_budget: usize,
}

impl Session {
    pub fn new(id: impl Into<String>, memory_budget: usize) -> Self {
        Session { id: id.into(), turns: Vec::new(), memory_budget }
    }

    pub fn push(&mut self, query: impl Into<String>, answer: impl Into<String>) {
        self.push_turn(Turn { query: query.into(), answer: answer.into(), refused: false });
    }

    pub fn push_refused(&mut self, query: impl Into<String>, answer: impl Into<String>) {
        self.push_turn(Turn { query: query.into(), answer: answer.into(), refused: true });
    }

    fn push_turn(&mut self, turn: Turn) {
        self.turns.push(turn);
        let excess = self.turns.len().saturating_sub(self.memory_budget);
        self.turns.drain(..excess);
    }
}

/// The last `min(k, len)` turns, oldest first, as
/// `User: …\nAssistant: …\n` blocks.
pub fn recall(session: &Session, k: usize) -> String {
    let skip = session.turns.len().saturating_sub(k);
    session.turns[skip..].iter().map(|t| format!("User: {}\nAssistant: {}\n", t.query, t.answer)).collect()
}
