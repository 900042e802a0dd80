//! Deterministic stand-in backends for tests and dry runs.

use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::{CausalLm, MaskedLm, ScoreEntry, ScoreError, ScoreRequest, Scorer, ScoringMode};

type SlotFn = dyn Fn(&str, &str) -> Vec<f64> + Send + Sync;
type NextFn = dyn Fn(&[usize]) -> Vec<f64> + Send + Sync;

/// Greedy longest-match tokenization against `vocab`. Entries starting with
/// `##` only match word-internally. Returns an empty vector when some part of
/// the text has no match.
fn greedy(vocab: &[String], text: &str, continuation_prefix: bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = text;
    let mut first = true;
    while !rest.is_empty() {
        let mut best: Option<(usize, usize)> = None;
        for (i, v) in vocab.iter().enumerate() {
            let piece = match (continuation_prefix && !first, v.strip_prefix("##")) {
                (true, Some(p)) => p,
                (true, None) => continue,
                (false, Some(_)) if continuation_prefix => continue,
                _ => v.as_str(),
            };
            if !piece.is_empty() && rest.starts_with(piece) && best.is_none_or(|(_, l)| piece.len() > l) {
                best = Some((i, piece.len()));
            }
        }
        match best {
            Some((i, l)) => {
                out.push(i);
                rest = &rest[l..];
                first = false;
            }
            None => return Vec::new(),
        }
    }
    out
}

/// Masked model over a small vocabulary with `##` continuation pieces.
pub struct MockMaskedLm {
    model_id: String,
    vocab: Vec<String>,
    logits: Box<SlotFn>,
}

impl MockMaskedLm {
    pub fn with_logits(vocab: Vec<String>, logits: impl Fn(&str, &str) -> Vec<f64> + Send + Sync + 'static) -> Self {
        MockMaskedLm {
            model_id: "mock-masked".into(),
            vocab,
            logits: Box::new(logits),
        }
    }

    pub fn uniform(vocab: Vec<String>) -> Self {
        let n = vocab.len();
        Self::with_logits(vocab, move |_, _| vec![0.0; n])
    }
}

impl MaskedLm for MockMaskedLm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    fn tokenize_word(&self, word: &str) -> Vec<usize> {
        greedy(&self.vocab, word, true)
    }

    fn slot_logits(&self, left: &str, right: &str) -> Result<Vec<f64>, ScoreError> {
        Ok((self.logits)(left, right))
    }
}

/// Causal model over a small vocabulary whose entries may carry a leading
/// space, in the style of byte-level BPE.
pub struct MockCausalLm {
    model_id: String,
    vocab: Vec<String>,
    next: Box<NextFn>,
}

impl MockCausalLm {
    pub fn with_logits(vocab: Vec<String>, next: impl Fn(&[usize]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        MockCausalLm {
            model_id: "mock-causal".into(),
            vocab,
            next: Box::new(next),
        }
    }

    pub fn uniform(vocab: Vec<String>) -> Self {
        let n = vocab.len();
        Self::with_logits(vocab, move |_| vec![0.0; n])
    }
}

impl CausalLm for MockCausalLm {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    fn tokenize(&self, text: &str) -> Vec<usize> {
        greedy(&self.vocab, text, false)
    }

    fn next_token_logits(&self, context: &[usize]) -> Result<Vec<f64>, ScoreError> {
        Ok((self.next)(context))
    }
}

/// Scores any candidate with a log probability derived from a hash of the
/// text and the candidate. Useful where real model output is irrelevant.
pub struct WordHashScorer {
    model_id: String,
    mode: ScoringMode,
}

impl WordHashScorer {
    pub fn new(model_id: &str, mode: ScoringMode) -> Self {
        WordHashScorer {
            model_id: model_id.into(),
            mode,
        }
    }

    pub fn logprob(full_text: &str, candidate: &str) -> f64 {
        let d = Sha256::new()
            .chain_update(full_text.as_bytes())
            .chain_update([0])
            .chain_update(candidate.as_bytes())
            .finalize();
        let x = u32::from_le_bytes([d[0], d[1], d[2], d[3]]) as f64 / u32::MAX as f64;
        -(0.5 + 12.0 * x)
    }
}

impl Scorer for WordHashScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn mode(&self) -> ScoringMode {
        self.mode
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        Ok(request
            .candidates
            .iter()
            .map(|c| ScoreEntry {
                candidate: c.clone(),
                logprob: Some(Self::logprob(&request.full_text, c)),
                token_count: 1,
            })
            .collect())
    }
}

/// Always fails with a retryable transport error.
pub struct Unreachable {
    model_id: String,
    mode: ScoringMode,
}

impl Unreachable {
    pub fn new(model_id: &str, mode: ScoringMode) -> Self {
        Unreachable {
            model_id: model_id.into(),
            mode,
        }
    }
}

impl Scorer for Unreachable {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn mode(&self) -> ScoringMode {
        self.mode
    }

    fn score(&self, _: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        Err(ScoreError::Transport {
            message: "backend unreachable".into(),
            retryable: true,
        })
    }
}

/// Counts calls and candidates passed through to the wrapped scorer.
pub struct CountingScorer<S> {
    inner: S,
    calls: AtomicUsize,
    candidates: AtomicUsize,
}

impl<S: Scorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        CountingScorer {
            inner,
            calls: AtomicUsize::new(0),
            candidates: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn candidates_seen(&self) -> usize {
        self.candidates.load(Ordering::SeqCst)
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn mode(&self) -> ScoringMode {
        self.inner.mode()
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.candidates.fetch_add(request.candidates.len(), Ordering::SeqCst);
        self.inner.score(request)
    }
}
