//! Concept-based expectedness.
//!
//! Instead of the surprisal of the strong scalemate's exact string, take the
//! probability of every alternative, weight it by the alternative's cosine
//! similarity to the strong scalemate in a static embedding space, and report
//! the surprisal of the weighted mean:
//!
//! ```text
//! value = -ln( sum_a P(a) w_a / sum_a w_a ),   w_a = max(cos(v_strong, v_a), 0)
//! ```
//!
//! Alternatives without an embedding, without a score, or with a
//! non-positive weight do not contribute and are listed in the result.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{log_sum_exp, ScoredAlternative};

#[derive(Debug, Error)]
pub enum ConceptError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector for `{0}`")]
    ZeroVector(String),
    #[error("strong scalemate `{0}` has no embedding")]
    StrongOov(String),
    #[error("no alternative for `{0}` has both a score and a positive similarity weight")]
    NoPositiveWeight(String),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f32>>,
    pub source: String,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, source: &str) -> Self {
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
            source: source.into(),
        }
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f32>) -> Result<(), ConceptError> {
        if vector.len() != self.dimension {
            return Err(ConceptError::DimensionMismatch(self.dimension, vector.len()));
        }
        if vector.iter().all(|x| *x == 0.0) {
            return Err(ConceptError::ZeroVector(word.into()));
        }
        self.vectors.insert(word.to_string(), vector);
        Ok(())
    }

    /// Reads the plain-text vector format: a word followed by its components,
    /// whitespace-separated, one word per line. A leading `count dim` header
    /// line is skipped. When `keep` is given only those words are stored.
    ///
    /// Some published tables contain tokens with internal spaces, so the
    /// vector is taken from the end of the line and the rest is the word.
    pub fn load(path: &Path, dimension: Option<usize>, keep: Option<&HashSet<String>>) -> Result<Self, ConceptError> {
        let file = File::open(path).map_err(|source| ConceptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut table = EmbeddingTable::new(dimension.unwrap_or(0), &path.display().to_string());
        let mut dim = dimension;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| ConceptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
                continue;
            }
            let d = *dim.get_or_insert(fields.len() - 1);
            table.dimension = d;
            let parse_err = |message: String| ConceptError::Parse { line: i + 1, message };
            if fields.len() < d + 1 {
                return Err(parse_err(format!(
                    "expected {d} components, found {}",
                    fields.len() - 1
                )));
            }
            let split = fields.len() - d;
            if fields[1..split].iter().all(|f| f.parse::<f32>().is_ok()) && split > 1 {
                return Err(parse_err(format!(
                    "expected {d} components, found {}",
                    fields.len() - 1
                )));
            }
            let word = fields[..split].join(" ");
            if keep.is_some_and(|k| !k.contains(&word)) {
                continue;
            }
            let vector = fields[split..]
                .iter()
                .map(|f| f.parse::<f32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(e.to_string()))?;
            if vector.iter().all(|x| *x == 0.0) {
                return Err(ConceptError::ZeroVector(word));
            }
            table.vectors.insert(word, vector);
        }
        Ok(table)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }
}

pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64, ConceptError> {
    if u.len() != v.len() {
        return Err(ConceptError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (*a as f64, *b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(ConceptError::ZeroVector(String::new()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSurprisalResult {
    /// Nats.
    pub value: f64,
    pub contributing: usize,
    pub dropped_oov: Vec<String>,
    pub dropped_nonpositive_weight: Vec<String>,
    /// Alternatives with an embedding but no score (multi-unit candidates in
    /// masked mode).
    pub dropped_unscored: Vec<String>,
}

/// `-ln(sum(w * p) / sum(w))` over `(logprob, weight)` pairs. Pairs with a
/// nonpositive weight are ignored; `None` when nothing remains.
pub fn weighted_mean_surprisal(terms: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let mut log_terms = Vec::new();
    let mut weight_sum = 0.0;
    for (logprob, w) in terms {
        if w > 0.0 {
            log_terms.push(logprob + w.ln());
            weight_sum += w;
        }
    }
    if log_terms.is_empty() {
        return None;
    }
    Some((weight_sum.ln() - log_sum_exp(&log_terms)).max(0.0))
}

pub fn weighted_average_surprisal(
    strong: &str,
    alternatives: &[String],
    scores: &HashMap<String, ScoredAlternative>,
    embeddings: &EmbeddingTable,
) -> Result<WeightedSurprisalResult, ConceptError> {
    let vs = embeddings
        .get(strong)
        .ok_or_else(|| ConceptError::StrongOov(strong.into()))?;
    let mut dropped_oov = Vec::new();
    let mut dropped_nonpositive_weight = Vec::new();
    let mut dropped_unscored = Vec::new();
    let mut terms = Vec::new();
    for a in alternatives {
        let Some(va) = embeddings.get(a) else {
            dropped_oov.push(a.clone());
            continue;
        };
        let Some(s) = scores.get(a) else {
            dropped_unscored.push(a.clone());
            continue;
        };
        let w = cosine_similarity(vs, va)?;
        if w <= 0.0 {
            dropped_nonpositive_weight.push(a.clone());
            continue;
        }
        terms.push((s.logprob(), w));
    }
    let contributing = terms.len();
    let value = weighted_mean_surprisal(terms).ok_or_else(|| ConceptError::NoPositiveWeight(strong.into()))?;
    Ok(WeightedSurprisalResult {
        value,
        contributing,
        dropped_oov,
        dropped_nonpositive_weight,
        dropped_unscored,
    })
}

/// The `k` most probable scored alternatives, ties in lexicographic order.
pub fn top_k_alternatives(
    alternatives: &[String],
    scores: &HashMap<String, ScoredAlternative>,
    k: usize,
) -> Result<Vec<(String, f64)>, ConceptError> {
    if k == 0 {
        return Err(ConceptError::ZeroK);
    }
    let mut scored: Vec<(String, f64)> = alternatives
        .iter()
        .filter_map(|a| scores.get(a).map(|s| (a.clone(), s.probability)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
