use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PartOfSpeech {
    Adj,
    Adv,
    Verb,
    Quant,
}

impl PartOfSpeech {
    pub fn as_str(self) -> &'static str {
        match self {
            PartOfSpeech::Adj => "ADJ",
            PartOfSpeech::Adv => "ADV",
            PartOfSpeech::Verb => "VERB",
            PartOfSpeech::Quant => "QUANT",
        }
    }
}

impl fmt::Display for PartOfSpeech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown part of speech `{0}`")]
pub struct UnknownPos(pub String);

impl FromStr for PartOfSpeech {
    type Err = UnknownPos;

    /// Accepts the canonical names as well as the spellings found in the
    /// source datasets (`adjective`, `JJ`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adj" | "adjective" | "jj" | "a" => Ok(PartOfSpeech::Adj),
            "adv" | "adverb" | "rb" | "r" => Ok(PartOfSpeech::Adv),
            "verb" | "v" | "vb" => Ok(PartOfSpeech::Verb),
            "quant" | "quantifier" | "q" | "det" => Ok(PartOfSpeech::Quant),
            _ => Err(UnknownPos(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScaleError {
    #[error("scalemate is empty")]
    Empty,
    #[error("scalemate `{0}` is a multi-word expression")]
    MultiWord(String),
    #[error("weak and strong scalemate are both `{0}`")]
    Identical(String),
}

/// A weak/strong lexical pair, e.g. ⟨big, enormous⟩.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scale {
    pub weak: String,
    pub strong: String,
    pub pos: PartOfSpeech,
}

impl Scale {
    pub fn new(weak: &str, strong: &str, pos: PartOfSpeech) -> Result<Self, ScaleError> {
        let weak = check_word(weak)?;
        let strong = check_word(strong)?;
        if weak == strong {
            return Err(ScaleError::Identical(weak));
        }
        Ok(Scale { weak, strong, pos })
    }

    /// The single within-scale scale, ⟨some, all⟩.
    pub fn some_all() -> Self {
        Scale {
            weak: "some".into(),
            strong: "all".into(),
            pos: PartOfSpeech::Quant,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}>", self.weak, self.strong)
    }
}

pub(crate) fn is_multi_word(word: &str) -> bool {
    word.split_whitespace().count() > 1
}

fn check_word(word: &str) -> Result<String, ScaleError> {
    let w = word.trim();
    if w.is_empty() {
        return Err(ScaleError::Empty);
    }
    if is_multi_word(w) {
        return Err(ScaleError::MultiWord(w.to_string()));
    }
    Ok(w.to_string())
}
