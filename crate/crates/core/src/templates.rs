//! Scalar constructions: the `"{WEAK}, but not {STRONG}"` frames whose
//! strong-scalemate slot is scored by a language model.

use std::io::BufRead;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::StimulusItem;
use crate::scale::{PartOfSpeech, Scale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Bidirectional: the slot is masked and read with full left and right context.
    MaskedSlot,
    /// Left-to-right: the slot is scored as a continuation of the prefix.
    Continuation,
}

impl ScoringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::MaskedSlot => "masked_slot",
            ScoringMode::Continuation => "continuation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("context does not contain `{0}`: {1:?}")]
    WeakAbsent(String, String),
    #[error("context contains `{word}` {count} times and no occurrence is flagged")]
    AmbiguousWeak { word: String, count: usize },
    #[error("flagged offset {0} is not an occurrence of `{1}`")]
    BadOffset(usize, String),
    #[error("within-scale templates need the scale <some, all>, got {0}")]
    NotSomeAll(Scale),
    #[error("no cross-scale template for part of speech {0}")]
    UnsupportedPos(PartOfSpeech),
    #[error("adverbial scale {0} needs a carrier adjective")]
    MissingAdjective(Scale),
    #[error("verbal scale {0} needs the past form of the weak scalemate")]
    MissingVerbPast(Scale),
    #[error("cannot derive a template frame for {scale} from {context:?}")]
    UnparsableContext { scale: Scale, context: String },
    #[error("slot {start}..{end} is not a valid span of {len}-byte text")]
    BadSpan { start: usize, end: usize, len: usize },
    #[error("continuation construction has suffix {0:?}; only \"\" or \" it\" allowed")]
    BadSuffix(String),
    #[error("stimulus file line {line}: {message}")]
    StimulusFile { line: usize, message: String },
}

/// A rendered sentence with a marked strong-scalemate slot.
///
/// `slot` is a UTF-8 byte range into `full_text`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalarConstruction {
    full_text: String,
    slot: Range<usize>,
    mode: ScoringMode,
}

impl ScalarConstruction {
    pub fn new(full_text: String, slot: Range<usize>, mode: ScoringMode) -> Result<Self, TemplateError> {
        let bad = || TemplateError::BadSpan {
            start: slot.start,
            end: slot.end,
            len: full_text.len(),
        };
        if slot.start > slot.end
            || slot.end > full_text.len()
            || !full_text.is_char_boundary(slot.start)
            || !full_text.is_char_boundary(slot.end)
        {
            return Err(bad());
        }
        let suffix = &full_text[slot.end..];
        if mode == ScoringMode::Continuation && !(suffix.is_empty() || suffix == " it") {
            return Err(TemplateError::BadSuffix(suffix.to_string()));
        }
        Ok(ScalarConstruction { full_text, slot, mode })
    }

    pub fn full_text(&self) -> &str {
        &self.full_text
    }

    pub fn slot_span(&self) -> Range<usize> {
        self.slot.clone()
    }

    pub fn mode(&self) -> ScoringMode {
        self.mode
    }

    pub fn prefix(&self) -> &str {
        &self.full_text[..self.slot.start]
    }

    pub fn slot_text(&self) -> &str {
        &self.full_text[self.slot.clone()]
    }

    pub fn suffix(&self) -> &str {
        &self.full_text[self.slot.end..]
    }

    /// The sentence with `word` in the slot.
    pub fn with_slot(&self, word: &str) -> String {
        format!("{}{}{}", self.prefix(), word, self.suffix())
    }
}

fn is_word_byte(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Byte offsets of whole-word, case-insensitive occurrences of `word`.
fn word_occurrences(text: &str, word: &str) -> Vec<usize> {
    let lower = text.to_lowercase();
    let needle = word.to_lowercase();
    if lower.len() != text.len() {
        // lowercasing changed byte lengths; fall back to an exact-case scan
        return exact_occurrences(text, word);
    }
    exact_occurrences(&lower, &needle)
}

fn exact_occurrences(text: &str, word: &str) -> Vec<usize> {
    text.match_indices(word)
        .filter(|(i, _)| {
            let before = text[..*i].chars().next_back();
            let after = text[i + word.len()..].chars().next();
            !before.is_some_and(is_word_byte) && !after.is_some_and(is_word_byte)
        })
        .map(|(i, _)| i)
        .collect()
}

const BUT_NOT_ALL_HEAD: &str = ", but not ";

/// Inserts ", but not all," directly after the "some" of a within-scale item.
///
/// When the context holds several occurrences of "some", the one at
/// `item.weak_offset` is used; without a flagged offset that is an error.
pub fn build_within_scale(item: &StimulusItem) -> Result<ScalarConstruction, TemplateError> {
    if item.scale.weak != "some" || item.scale.strong != "all" {
        return Err(TemplateError::NotSomeAll(item.scale.clone()));
    }
    let context = &item.context;
    let hits = word_occurrences(context, "some");
    let at = match (hits.len(), item.weak_offset) {
        (0, _) => return Err(TemplateError::WeakAbsent("some".into(), context.clone())),
        (_, Some(offset)) => {
            if !hits.contains(&offset) {
                return Err(TemplateError::BadOffset(offset, "some".into()));
            }
            offset
        }
        (1, None) => hits[0],
        (count, None) => {
            return Err(TemplateError::AmbiguousWeak {
                word: "some".into(),
                count,
            })
        }
    };
    let insert_at = at + "some".len();
    let (head, tail) = context.split_at(insert_at);
    let slot_start = head.len() + BUT_NOT_ALL_HEAD.len();
    let full_text = format!("{head}{BUT_NOT_ALL_HEAD}all,{tail}");
    ScalarConstruction::new(full_text, slot_start..slot_start + 3, ScoringMode::MaskedSlot)
}

/// Everything needed to render one cross-scale frame.
///
/// Records of this shape are also the line-delimited stimulus files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossScaleStimulus {
    pub weak: String,
    pub strong: String,
    pub pos: PartOfSpeech,
    pub subject_np: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adj_for_adverb: Option<String>,
    /// Past form of the weak verb, e.g. "started" for ⟨start, finish⟩.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb_past: Option<String>,
    /// Base form of the strong verb when the scale lists it inflected
    /// (⟨started, finished⟩ is rendered with "finish").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_base: Option<String>,
    /// Append " it" after the strong verb.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub trailing_it: bool,
}

impl CrossScaleStimulus {
    pub fn new(scale: &Scale, subject_np: &str) -> Self {
        CrossScaleStimulus {
            weak: scale.weak.clone(),
            strong: scale.strong.clone(),
            pos: scale.pos,
            subject_np: subject_np.to_string(),
            adj_for_adverb: None,
            verb_past: None,
            strong_base: None,
            trailing_it: false,
        }
    }

    /// The word that fills the slot.
    pub fn slot_word(&self) -> &str {
        match (self.pos, self.strong_base.as_deref()) {
            (PartOfSpeech::Verb, Some(base)) if !base.trim().is_empty() => base.trim(),
            _ => &self.strong,
        }
    }

    pub fn scale(&self) -> Scale {
        Scale {
            weak: self.weak.clone(),
            strong: self.strong.clone(),
            pos: self.pos,
        }
    }

    /// Recovers the frame from an original stimulus sentence such as
    /// "The elephant is big." (ADJ), "The director is sometimes late." (ADV)
    /// or "The runner started." (VERB).
    pub fn from_context(scale: &Scale, context: &str) -> Result<Self, TemplateError> {
        let fail = || TemplateError::UnparsableContext {
            scale: scale.clone(),
            context: context.to_string(),
        };
        let sentence = strip_final_punctuation(context);
        let words: Vec<&str> = sentence.split_whitespace().collect();
        let mut stim = CrossScaleStimulus::new(scale, "");
        let lw = |w: &str| w.to_lowercase();
        match scale.pos {
            PartOfSpeech::Adj => {
                let n = words.len();
                if n < 3 || lw(words[n - 1]) != lw(&scale.weak) || !is_copula(words[n - 2]) {
                    return Err(fail());
                }
                stim.subject_np = words[..n - 2].join(" ");
            }
            PartOfSpeech::Adv => {
                let i = words.iter().rposition(|w| lw(w) == lw(&scale.weak)).ok_or_else(fail)?;
                if i < 2 || !is_copula(words[i - 1]) || i + 1 >= words.len() {
                    return Err(fail());
                }
                stim.subject_np = words[..i - 1].join(" ");
                stim.adj_for_adverb = Some(words[i + 1..].join(" "));
            }
            PartOfSpeech::Verb => {
                let n = words.len();
                if n < 2 {
                    return Err(fail());
                }
                let (verb_at, trailing_it) = if lw(words[n - 1]) == "it" && n >= 3 {
                    (n - 2, true)
                } else {
                    (n - 1, false)
                };
                let past = words[verb_at];
                stim.subject_np = words[..verb_at].join(" ");
                stim.verb_past = Some(past.to_string());
                stim.trailing_it = trailing_it;
            }
            PartOfSpeech::Quant => return Err(TemplateError::UnsupportedPos(scale.pos)),
        }
        if stim.subject_np.is_empty() {
            return Err(fail());
        }
        Ok(stim)
    }
}

fn is_copula(word: &str) -> bool {
    matches!(word.to_lowercase().as_str(), "is" | "was" | "are" | "were")
}

fn strip_final_punctuation(s: &str) -> &str {
    s.trim().trim_end_matches(['.', '!', '?', ';', ',']).trim_end()
}

/// Renders the cross-scale frame for one scale:
///
/// * ADJ: `{NP} is {WEAK}, but not {STRONG}`
/// * ADV: `{NP} is {WEAK} {ADJ}, but not {STRONG}`
/// * VERB: `{NP} {WEAK-past}, but did not {STRONG}`
///
/// The strong scalemate ends the sentence except for the registered " it" verbs.
pub fn build_cross_scale(stim: &CrossScaleStimulus) -> Result<ScalarConstruction, TemplateError> {
    let scale = stim.scale();
    let np = strip_final_punctuation(&stim.subject_np);
    let head = match stim.pos {
        PartOfSpeech::Adj => format!("{np} is {}, but not ", stim.weak),
        PartOfSpeech::Adv => {
            let adj = stim
                .adj_for_adverb
                .as_deref()
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .ok_or_else(|| TemplateError::MissingAdjective(scale.clone()))?;
            format!("{np} is {} {adj}, but not ", stim.weak)
        }
        PartOfSpeech::Verb => {
            let past = stim
                .verb_past
                .as_deref()
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .ok_or_else(|| TemplateError::MissingVerbPast(scale.clone()))?;
            format!("{np} {past}, but did not ")
        }
        PartOfSpeech::Quant => return Err(TemplateError::UnsupportedPos(stim.pos)),
    };
    let word = stim.slot_word();
    let start = head.len();
    let end = start + word.len();
    let suffix = if stim.pos == PartOfSpeech::Verb && stim.trailing_it {
        " it"
    } else {
        ""
    };
    ScalarConstruction::new(format!("{head}{word}{suffix}"), start..end, ScoringMode::Continuation)
}

/// Reads a line-delimited stimulus file of [`CrossScaleStimulus`] records.
pub fn read_stimuli<R: BufRead>(input: R) -> Result<Vec<CrossScaleStimulus>, TemplateError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let err = |message: String| TemplateError::StimulusFile { line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}
