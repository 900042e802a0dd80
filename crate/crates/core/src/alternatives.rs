//! Candidate alternative sets.
//!
//! The within-scale analysis uses a fixed set of eight quantifiers. The
//! cross-scale sets are built per part of speech from a tagged lexicon and a
//! word-frequency table: words are ranked by descending count (ties broken
//! lexicographically), truncated to a cutoff, then manual exclusions are
//! removed. Snapshots of all three inputs ship in `data/alternatives/`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scale::PartOfSpeech;

pub const QUANTIFIERS: [&str; 8] = ["each", "every", "few", "half", "much", "many", "most", "all"];

#[derive(Debug, Error)]
pub enum AlternativesError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("no {0} lexicon word occurs in the frequency table")]
    EmptyIntersection(PartOfSpeech),
    #[error("no frequency-filtered set for {0}")]
    UnsupportedPos(PartOfSpeech),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub lexicon_source: String,
    pub frequency_source: String,
    pub cutoff: Option<usize>,
    pub exclusions_applied: Vec<String>,
    /// Words appended after the cutoff because a dataset tests them.
    pub force_included: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativeSet {
    pub pos: PartOfSpeech,
    members: Vec<String>,
    pub provenance: Provenance,
}

impl AlternativeSet {
    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.members.iter().any(|m| m == word)
    }

    /// Appends any of `words` not already present and records them in the
    /// provenance block. Returns the words that were added.
    pub fn force_include<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let mut added = Vec::new();
        for w in words {
            let w = w.trim().to_lowercase();
            if w.is_empty() || self.contains(&w) {
                continue;
            }
            log::info!("{} set: force-including tested scalemate `{w}`", self.pos);
            self.members.push(w.clone());
            self.provenance.force_included.push(w.clone());
            added.push(w);
        }
        added
    }
}

pub fn quantifier_set() -> AlternativeSet {
    AlternativeSet {
        pos: PartOfSpeech::Quant,
        members: QUANTIFIERS.iter().map(|s| s.to_string()).collect(),
        provenance: Provenance {
            lexicon_source: "closed quantifier list".into(),
            frequency_source: "none".into(),
            cutoff: None,
            exclusions_applied: Vec::new(),
            force_included: Vec::new(),
        },
    }
}

/// Fine-grained tag a POS set is drawn from.
pub fn penn_tag(pos: PartOfSpeech) -> Option<&'static str> {
    match pos {
        PartOfSpeech::Adj => Some("JJ"),
        PartOfSpeech::Adv => Some("RB"),
        PartOfSpeech::Verb => Some("VB"),
        PartOfSpeech::Quant => None,
    }
}

fn read(path: &Path) -> Result<String, AlternativesError> {
    fs::read_to_string(path).map_err(|source| AlternativesError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Data lines of a two-column TSV, skipping a header whose second field is
/// `header_second`.
fn tsv_rows<'a>(
    text: &'a str,
    path: &'a Path,
    header_second: &'a str,
) -> impl Iterator<Item = Result<(usize, &'a str, &'a str), AlternativesError>> + 'a {
    text.lines().enumerate().filter_map(move |(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            return None;
        }
        let mut parts = line.split('\t');
        let (a, b) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (a.trim(), b.trim()),
            _ => {
                return Some(Err(AlternativesError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: "expected two tab-separated fields".into(),
                }))
            }
        };
        if i == 0 && b.eq_ignore_ascii_case(header_second) {
            return None;
        }
        Some(Ok((i + 1, a, b)))
    })
}

/// Words with fine-grained POS tags.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: Vec<(String, String)>,
    pub source: String,
}

impl Lexicon {
    pub fn from_entries<W: Into<String>, T: Into<String>>(entries: impl IntoIterator<Item = (W, T)>) -> Self {
        Lexicon {
            entries: entries.into_iter().map(|(w, t)| (w.into(), t.into())).collect(),
            source: "in-memory".into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, AlternativesError> {
        let text = read(path)?;
        let mut entries = Vec::new();
        for row in tsv_rows(&text, path, "tag") {
            let (_, w, t) = row?;
            entries.push((w.to_string(), t.to_string()));
        }
        Ok(Lexicon {
            entries,
            source: path.display().to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Unique single-word lowercase entries carrying `tag`.
    pub fn words_with_tag(&self, tag: &str) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|(w, t)| t == tag && is_plain_word(w))
            .map(|(w, _)| w.as_str())
            .filter(|w| seen.insert(*w))
            .collect()
    }
}

fn is_plain_word(w: &str) -> bool {
    !w.is_empty() && !w.chars().any(|c| c.is_whitespace() || c.is_uppercase())
}

#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    pub source: String,
}

impl FrequencyTable {
    pub fn from_counts<W: Into<String>>(counts: impl IntoIterator<Item = (W, u64)>) -> Self {
        FrequencyTable {
            counts: counts.into_iter().map(|(w, c)| (w.into(), c)).collect(),
            source: "in-memory".into(),
        }
    }

    /// Reads `word<TAB>count` lines. Repeated words keep the larger count.
    pub fn load(path: &Path) -> Result<Self, AlternativesError> {
        let text = read(path)?;
        let mut counts: HashMap<String, u64> = HashMap::new();
        for row in tsv_rows(&text, path, "count") {
            let (line, w, c) = row?;
            let c: u64 = c.parse().map_err(|_| AlternativesError::Parse {
                path: path.display().to_string(),
                line,
                message: format!("count `{c}` is not a non-negative integer"),
            })?;
            let e = counts.entry(w.to_lowercase()).or_insert(0);
            *e = (*e).max(c);
        }
        Ok(FrequencyTable {
            counts,
            source: path.display().to_string(),
        })
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.counts.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Lexicon words with the POS's tag that occur in the frequency table, most
/// frequent first, ties in lexicographic order.
pub fn ranked_words(
    pos: PartOfSpeech,
    lexicon: &Lexicon,
    frequencies: &FrequencyTable,
) -> Result<Vec<(String, u64)>, AlternativesError> {
    let tag = penn_tag(pos).ok_or(AlternativesError::UnsupportedPos(pos))?;
    let mut ranked: Vec<(String, u64)> = lexicon
        .words_with_tag(tag)
        .into_iter()
        .filter_map(|w| frequencies.count(w).map(|c| (w.to_string(), c)))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

pub fn build_pos_set(
    pos: PartOfSpeech,
    lexicon: &Lexicon,
    frequencies: &FrequencyTable,
    cutoff: usize,
    exclusions: &[String],
) -> Result<AlternativeSet, AlternativesError> {
    if lexicon.is_empty() {
        return Err(AlternativesError::EmptyLexicon);
    }
    if cutoff == 0 {
        return Err(AlternativesError::ZeroCutoff);
    }
    let ranked = ranked_words(pos, lexicon, frequencies)?;
    if ranked.is_empty() {
        return Err(AlternativesError::EmptyIntersection(pos));
    }
    let excluded: HashSet<String> = exclusions.iter().map(|w| w.trim().to_lowercase()).collect();
    let top = &ranked[..cutoff.min(ranked.len())];
    let mut applied = Vec::new();
    let mut members = Vec::new();
    for (w, _) in top {
        if excluded.contains(w) {
            applied.push(w.clone());
        } else {
            members.push(w.clone());
        }
    }
    log::debug!(
        "{pos} set: {} in-frequency words, cutoff {cutoff}, {} excluded, {} members",
        ranked.len(),
        applied.len(),
        members.len()
    );
    Ok(AlternativeSet {
        pos,
        members,
        provenance: Provenance {
            lexicon_source: lexicon.source.clone(),
            frequency_source: frequencies.source.clone(),
            cutoff: Some(cutoff),
            exclusions_applied: applied,
            force_included: Vec::new(),
        },
    })
}

/// Reads a one-word-per-line list; `#` starts a comment.
pub fn load_word_list(path: &Path) -> Result<Vec<String>, AlternativesError> {
    Ok(read(path)?
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn default_cutoff(pos: PartOfSpeech) -> usize {
    match pos {
        PartOfSpeech::Verb => 226,
        _ => 1000,
    }
}

/// The shipped data snapshot directory.
pub fn bundled_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("alternatives")
}

/// Lexicon, frequency table and exclusion lists loaded from one directory.
#[derive(Debug, Clone)]
pub struct DataSnapshot {
    pub lexicon: Lexicon,
    pub frequencies: FrequencyTable,
    pub exclusions: HashMap<PartOfSpeech, Vec<String>>,
}

impl DataSnapshot {
    pub fn load(dir: &Path) -> Result<Self, AlternativesError> {
        let lexicon = Lexicon::load(&dir.join("lexicon.tsv"))?;
        let frequencies = FrequencyTable::load(&dir.join("frequency.tsv"))?;
        let mut exclusions = HashMap::new();
        for (pos, name) in [
            (PartOfSpeech::Adj, "exclusions_adj.txt"),
            (PartOfSpeech::Adv, "exclusions_adv.txt"),
            (PartOfSpeech::Verb, "exclusions_verb.txt"),
        ] {
            let p = dir.join(name);
            let list = if p.exists() { load_word_list(&p)? } else { Vec::new() };
            exclusions.insert(pos, list);
        }
        Ok(DataSnapshot {
            lexicon,
            frequencies,
            exclusions,
        })
    }

    pub fn build(&self, pos: PartOfSpeech, cutoff: Option<usize>) -> Result<AlternativeSet, AlternativesError> {
        if pos == PartOfSpeech::Quant {
            return Ok(quantifier_set());
        }
        let empty = Vec::new();
        build_pos_set(
            pos,
            &self.lexicon,
            &self.frequencies,
            cutoff.unwrap_or_else(|| default_cutoff(pos)),
            self.exclusions.get(&pos).unwrap_or(&empty),
        )
    }
}
