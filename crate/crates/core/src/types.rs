//! Prompts, responses and preference pairs.

use serde::{Deserialize, Serialize};

use crate::error::{AlignError, Result};
use crate::lang::Lang;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub lang: Lang,
}

impl Prompt {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: Lang) -> Result<Self> {
        let prompt = Prompt { id: id.into(), text: text.into(), lang };
        prompt.validate()?;
        Ok(prompt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(AlignError::invalid(format!("prompt {} has empty text", self.id)));
        }
        Ok(())
    }
}

/// Where a response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Base,
    Corrected,
    Refined,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseText {
    pub id: String,
    pub prompt_id: String,
    pub text: String,
    pub provenance: Provenance,
}

impl ResponseText {
    pub fn new(
        id: impl Into<String>,
        prompt: &Prompt,
        text: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        let response = ResponseText {
            id: id.into(),
            prompt_id: prompt.id.clone(),
            text: text.into(),
            provenance,
        };
        if response.text.trim().is_empty() {
            return Err(AlignError::invalid(format!("response {} has empty text", response.id)));
        }
        Ok(response)
    }
}

/// One `(x, y_w, y_l)` record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: Prompt,
    pub winner: ResponseText,
    pub loser: ResponseText,
}

impl PreferencePair {
    pub fn new(prompt: Prompt, winner: ResponseText, loser: ResponseText) -> Result<Self> {
        let pair = PreferencePair { prompt, winner, loser };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.winner.text == self.loser.text {
            return Err(AlignError::invalid(format!(
                "preference pair for prompt {} has identical winner and loser",
                self.prompt.id
            )));
        }
        if self.winner.prompt_id != self.prompt.id || self.loser.prompt_id != self.prompt.id {
            return Err(AlignError::invalid(format!(
                "preference pair responses do not reference prompt {}",
                self.prompt.id
            )));
        }
        Ok(())
    }

    /// The same pair with winner and loser exchanged.
    pub fn swapped(&self) -> Self {
        PreferencePair {
            prompt: self.prompt.clone(),
            winner: self.loser.clone(),
            loser: self.winner.clone(),
        }
    }
}
