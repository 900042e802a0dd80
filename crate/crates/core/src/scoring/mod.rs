//! Language-model scoring of candidate strong scalemates.
//!
//! A [`Scorer`] answers one request shape (see [`ScoreRequest`]) for one
//! [`ScoringMode`]. The request/response pair doubles as the wire format for
//! out-of-process backends ([`subprocess`]). In-process models plug in through
//! [`MaskedLm`] and [`CausalLm`]; the adapters here do the softmax and the
//! chain-rule accumulation, so a model only has to hand back logits.
//!
//! Log probabilities are natural logs throughout; surprisal is in nats.

pub mod cache;
pub mod mock;
pub mod subprocess;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::templates::ScalarConstruction;
pub use crate::templates::ScoringMode;
pub use cache::{cached, CachedScorer, ScoreCache};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("backend `{model_id}` answers {backend:?} requests, construction is {requested:?}")]
    ModeMismatch {
        model_id: String,
        backend: ScoringMode,
        requested: ScoringMode,
    },
    #[error("empty candidate")]
    EmptyCandidate,
    #[error("backend transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("offline mode: no cached score for `{candidate}` under `{model_id}`")]
    CacheMiss { model_id: String, candidate: String },
    #[error("score cache {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScoreError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ScoreError::Transport { retryable: true, .. })
    }
}

/// A scored candidate. `probability == exp(-surprisal)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAlternative {
    pub word: String,
    pub surprisal: f64,
    pub probability: f64,
    pub token_count: usize,
}

impl ScoredAlternative {
    pub fn from_logprob(word: &str, logprob: f64, token_count: usize) -> Self {
        let surprisal = if logprob == 0.0 { 0.0 } else { -logprob };
        ScoredAlternative {
            word: word.to_string(),
            surprisal,
            probability: logprob.exp(),
            token_count,
        }
    }

    pub fn logprob(&self) -> f64 {
        -self.surprisal
    }
}

/// One scoring request: a construction plus the words to try in its slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub model_id: String,
    pub mode: ScoringMode,
    pub prefix: String,
    pub full_text: String,
    /// Byte offsets of the slot in `full_text`.
    pub slot_span: [usize; 2],
    pub candidates: Vec<String>,
}

impl ScoreRequest {
    pub fn new(model_id: &str, construction: &ScalarConstruction, candidates: Vec<String>) -> Self {
        let span = construction.slot_span();
        ScoreRequest {
            model_id: model_id.to_string(),
            mode: construction.mode(),
            prefix: construction.prefix().to_string(),
            full_text: construction.full_text().to_string(),
            slot_span: [span.start, span.end],
            candidates,
        }
    }

    pub(crate) fn construction(&self) -> Result<ScalarConstruction, ScoreError> {
        ScalarConstruction::new(self.full_text.clone(), self.slot_span[0]..self.slot_span[1], self.mode)
            .map_err(|e| ScoreError::Protocol(e.to_string()))
    }

    fn with_candidates(&self, candidates: Vec<String>) -> Self {
        ScoreRequest {
            candidates,
            ..self.clone()
        }
    }
}

/// Backend answer for one candidate. `logprob` is `None` when the candidate
/// cannot be read in this mode (a multi-unit word at a masked slot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub candidate: String,
    pub logprob: Option<f64>,
    pub token_count: usize,
}

/// A language-model backend behind the request/response contract.
pub trait Scorer: Send + Sync {
    fn model_id(&self) -> &str;
    fn mode(&self) -> ScoringMode;
    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for std::sync::Arc<S> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn mode(&self) -> ScoringMode {
        (**self).mode()
    }
    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        (**self).score(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub word: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredBatch {
    pub scored: Vec<ScoredAlternative>,
    /// Masked-slot candidates that are not a single vocabulary unit.
    pub skipped: Vec<SkippedCandidate>,
}

impl ScoredBatch {
    pub fn get(&self, word: &str) -> Option<&ScoredAlternative> {
        self.scored.iter().find(|s| s.word == word)
    }

    pub fn to_map(&self) -> HashMap<String, ScoredAlternative> {
        self.scored.iter().map(|s| (s.word.clone(), s.clone())).collect()
    }
}

fn dedup(candidates: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    candidates.iter().filter(|c| seen.insert(c.as_str())).cloned().collect()
}

fn check_mode(backend: &dyn Scorer, construction: &ScalarConstruction, want: ScoringMode) -> Result<(), ScoreError> {
    for got in [backend.mode(), construction.mode()] {
        if got != want {
            return Err(ScoreError::ModeMismatch {
                model_id: backend.model_id().to_string(),
                backend: backend.mode(),
                requested: construction.mode(),
            });
        }
    }
    Ok(())
}

fn run(
    backend: &dyn Scorer,
    construction: &ScalarConstruction,
    candidates: &[String],
) -> Result<Vec<ScoreEntry>, ScoreError> {
    let candidates = dedup(candidates);
    let request = ScoreRequest::new(backend.model_id(), construction, candidates.clone());
    let entries = backend.score(&request)?;
    let mut by_word: HashMap<&str, &ScoreEntry> = HashMap::new();
    for e in &entries {
        by_word.insert(e.candidate.as_str(), e);
    }
    candidates
        .iter()
        .map(|c| {
            let e = by_word
                .get(c.as_str())
                .ok_or_else(|| ScoreError::Protocol(format!("no result for candidate `{c}`")))?;
            if let Some(lp) = e.logprob {
                if !lp.is_finite() || lp > 1e-9 {
                    return Err(ScoreError::Protocol(format!(
                        "log probability {lp} for `{c}` is outside (-inf, 0]"
                    )));
                }
            }
            Ok(ScoreEntry {
                candidate: c.clone(),
                logprob: e.logprob.map(|lp| lp.min(0.0)),
                token_count: e.token_count,
            })
        })
        .collect()
}

/// Reads each candidate's probability at the masked slot.
///
/// Candidates that do not map to exactly one vocabulary unit are skipped and
/// reported in [`ScoredBatch::skipped`].
pub fn score_masked_slot(
    backend: &dyn Scorer,
    construction: &ScalarConstruction,
    candidates: &[String],
) -> Result<ScoredBatch, ScoreError> {
    check_mode(backend, construction, ScoringMode::MaskedSlot)?;
    let mut batch = ScoredBatch::default();
    for e in run(backend, construction, candidates)? {
        match e.logprob {
            Some(lp) if e.token_count == 1 => batch.scored.push(ScoredAlternative::from_logprob(&e.candidate, lp, 1)),
            _ => batch.skipped.push(SkippedCandidate {
                word: e.candidate,
                token_count: e.token_count,
            }),
        }
    }
    if !batch.skipped.is_empty() {
        log::debug!(
            "{}: skipped {} multi-unit candidates",
            backend.model_id(),
            batch.skipped.len()
        );
    }
    Ok(batch)
}

/// Scores each candidate as the continuation of the construction's prefix.
/// The suffix is not conditioned on.
pub fn score_continuation(
    backend: &dyn Scorer,
    construction: &ScalarConstruction,
    candidates: &[String],
) -> Result<ScoredBatch, ScoreError> {
    check_mode(backend, construction, ScoringMode::Continuation)?;
    if candidates.iter().any(|c| c.trim().is_empty()) {
        return Err(ScoreError::EmptyCandidate);
    }
    let mut batch = ScoredBatch::default();
    for e in run(backend, construction, candidates)? {
        let lp = e
            .logprob
            .ok_or_else(|| ScoreError::Protocol(format!("continuation result for `{}` has no logprob", e.candidate)))?;
        if e.token_count == 0 {
            return Err(ScoreError::Protocol(format!("`{}` has zero tokens", e.candidate)));
        }
        batch
            .scored
            .push(ScoredAlternative::from_logprob(&e.candidate, lp, e.token_count));
    }
    Ok(batch)
}

/// Dispatches on the construction's mode.
pub fn score(
    backend: &dyn Scorer,
    construction: &ScalarConstruction,
    candidates: &[String],
) -> Result<ScoredBatch, ScoreError> {
    match construction.mode() {
        ScoringMode::MaskedSlot => score_masked_slot(backend, construction, candidates),
        ScoringMode::Continuation => score_continuation(backend, construction, candidates),
    }
}

/// Retries retryable transport failures up to `attempts` times in total.
pub fn score_with_retry(
    backend: &dyn Scorer,
    construction: &ScalarConstruction,
    candidates: &[String],
    attempts: usize,
) -> Result<ScoredBatch, ScoreError> {
    let mut last = None;
    for attempt in 0..attempts.max(1) {
        match score(backend, construction, candidates) {
            Err(e) if e.is_retryable() => {
                log::warn!("{} attempt {}: {e}", backend.model_id(), attempt + 1);
                last = Some(e);
            }
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Rescales probabilities so they sum to one over the given candidates.
pub fn renormalize(scored: &[ScoredAlternative]) -> Vec<ScoredAlternative> {
    let lps: Vec<f64> = scored.iter().map(ScoredAlternative::logprob).collect();
    let z = log_sum_exp(&lps);
    scored
        .iter()
        .map(|s| ScoredAlternative::from_logprob(&s.word, (s.logprob() - z).min(0.0), s.token_count))
        .collect()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(logits);
    logits.iter().map(|x| x - z).collect()
}

/// A bidirectional model that exposes its distribution at a masked position.
pub trait MaskedLm: Send + Sync {
    fn model_id(&self) -> &str;
    fn vocabulary(&self) -> &[String];
    /// Vocabulary indices for a bare word.
    fn tokenize_word(&self, word: &str) -> Vec<usize>;
    /// Logits over the vocabulary at a mask placed between `left` and `right`.
    fn slot_logits(&self, left: &str, right: &str) -> Result<Vec<f64>, ScoreError>;
}

/// A left-to-right model.
pub trait CausalLm: Send + Sync {
    fn model_id(&self) -> &str;
    fn vocabulary(&self) -> &[String];
    fn tokenize(&self, text: &str) -> Vec<usize>;
    /// Logits for the token following `context`.
    fn next_token_logits(&self, context: &[usize]) -> Result<Vec<f64>, ScoreError>;
}

pub struct MaskedLmScorer<M> {
    lm: M,
}

impl<M: MaskedLm> MaskedLmScorer<M> {
    pub fn new(lm: M) -> Self {
        MaskedLmScorer { lm }
    }

    pub fn lm(&self) -> &M {
        &self.lm
    }

    fn slot_log_probs(&self, construction: &ScalarConstruction) -> Result<Vec<f64>, ScoreError> {
        let logits = self.lm.slot_logits(construction.prefix(), construction.suffix())?;
        if logits.len() != self.lm.vocabulary().len() {
            return Err(ScoreError::Protocol(format!(
                "{} logits for a {}-unit vocabulary",
                logits.len(),
                self.lm.vocabulary().len()
            )));
        }
        Ok(log_softmax(&logits))
    }

    /// Total probability mass over the full vocabulary at the slot.
    pub fn slot_mass(&self, construction: &ScalarConstruction) -> Result<f64, ScoreError> {
        Ok(self.slot_log_probs(construction)?.iter().map(|lp| lp.exp()).sum())
    }
}

impl<M: MaskedLm> Scorer for MaskedLmScorer<M> {
    fn model_id(&self) -> &str {
        self.lm.model_id()
    }

    fn mode(&self) -> ScoringMode {
        ScoringMode::MaskedSlot
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        let lps = self.slot_log_probs(&request.construction()?)?;
        Ok(request
            .candidates
            .iter()
            .map(|c| {
                let ids = self.lm.tokenize_word(c);
                ScoreEntry {
                    candidate: c.clone(),
                    logprob: (ids.len() == 1).then(|| lps[ids[0]]),
                    token_count: ids.len(),
                }
            })
            .collect())
    }
}

pub struct CausalLmScorer<C> {
    lm: C,
}

impl<C: CausalLm> CausalLmScorer<C> {
    pub fn new(lm: C) -> Self {
        CausalLmScorer { lm }
    }

    pub fn lm(&self) -> &C {
        &self.lm
    }
}

impl<C: CausalLm> Scorer for CausalLmScorer<C> {
    fn model_id(&self) -> &str {
        self.lm.model_id()
    }

    fn mode(&self) -> ScoringMode {
        ScoringMode::Continuation
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        let context_text = request.prefix.trim_end();
        // the candidate carries the word boundary that separated it from the prefix
        let boundary = if context_text.len() < request.prefix.len() && !context_text.is_empty() {
            " "
        } else {
            ""
        };
        let context = self.lm.tokenize(context_text);
        let mut out = Vec::with_capacity(request.candidates.len());
        for c in &request.candidates {
            let tokens = self.lm.tokenize(&format!("{boundary}{c}"));
            if tokens.is_empty() {
                return Err(ScoreError::EmptyCandidate);
            }
            let mut ctx = context.clone();
            let mut logprob = 0.0;
            for &t in &tokens {
                let lps = log_softmax(&self.lm.next_token_logits(&ctx)?);
                logprob += *lps
                    .get(t)
                    .ok_or_else(|| ScoreError::Protocol(format!("token {t} outside vocabulary")))?;
                ctx.push(t);
            }
            out.push(ScoreEntry {
                candidate: c.clone(),
                logprob: Some(logprob),
                token_count: tokens.len(),
            });
        }
        Ok(out)
    }
}
