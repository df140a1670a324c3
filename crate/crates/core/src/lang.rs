use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Language tag attached to prompts, documents and eval items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Lang {
    SimplifiedChinese,
    TraditionalChinese,
    English,
    CantoneseOral,
    Mixed,
    #[default]
    Unknown,
}

impl Lang {
    pub const ALL: [Lang; 6] = [
        Lang::SimplifiedChinese,
        Lang::TraditionalChinese,
        Lang::English,
        Lang::CantoneseOral,
        Lang::Mixed,
        Lang::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Lang::SimplifiedChinese => "simplified-chinese",
            Lang::TraditionalChinese => "traditional-chinese",
            Lang::English => "english",
            Lang::CantoneseOral => "cantonese-oral",
            Lang::Mixed => "mixed",
            Lang::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Lang::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown language tag {s:?}"))
    }
}
