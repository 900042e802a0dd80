//! Persistent score cache.
//!
//! One JSON record per line, appended as scores are computed. Records are
//! keyed by `(model_id, construction_hash, candidate)`. A line that fails to
//! parse is dropped on load and the file is rewritten without it, so the
//! affected scores are recomputed on the next miss.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ScoreEntry, ScoreError, ScoreRequest, Scorer, ScoringMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub model_id: String,
    pub construction_hash: String,
    pub mode: ScoringMode,
    pub candidate: String,
    pub logprob: Option<f64>,
    pub token_count: usize,
    pub created_at: u64,
}

type Key = (String, String, String);

#[derive(Default)]
struct Index {
    records: HashMap<Key, (CacheRecord, String)>,
}

pub struct ScoreCache {
    path: PathBuf,
    index: RwLock<Index>,
    writer: Mutex<()>,
    discarded: usize,
}

/// Stable digest of the parts of a construction a score depends on.
pub fn construction_hash(mode: ScoringMode, full_text: &str, span: [usize; 2]) -> String {
    let mut h = Sha256::new();
    h.update(mode.as_str().as_bytes());
    h.update([0]);
    h.update(full_text.as_bytes());
    h.update([0]);
    h.update(span[0].to_le_bytes());
    h.update(span[1].to_le_bytes());
    hex::encode(h.finalize())
}

fn io_err(path: &Path, source: std::io::Error) -> ScoreError {
    ScoreError::CacheIo {
        path: path.display().to_string(),
        source,
    }
}

impl ScoreCache {
    /// Opens (or lazily creates) the cache at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, ScoreError> {
        let path = path.into();
        let mut index = Index::default();
        let mut kept = Vec::new();
        let mut discarded = 0;
        if path.exists() {
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| io_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) => {
                        let key = (
                            rec.model_id.clone(),
                            rec.construction_hash.clone(),
                            rec.candidate.clone(),
                        );
                        if let Entry::Vacant(slot) = index.records.entry(key) {
                            kept.push(line.clone());
                            slot.insert((rec, line));
                        }
                    }
                    Err(e) => {
                        log::warn!("{}: discarding corrupt cache line: {e}", path.display());
                        discarded += 1;
                    }
                }
            }
            if discarded > 0 {
                let tmp = path.with_extension("jsonl.tmp");
                let mut body = kept.join("\n");
                if !body.is_empty() {
                    body.push('\n');
                }
                fs::write(&tmp, body).map_err(|e| io_err(&tmp, e))?;
                fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
            }
        }
        Ok(ScoreCache {
            path,
            index: RwLock::new(index),
            writer: Mutex::new(()),
            discarded,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Corrupt lines dropped when the cache was opened.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forgets every in-memory record if the backing file has been removed.
    fn sync_with_disk(&self) {
        if !self.path.exists() {
            let mut idx = self.index.write().unwrap();
            if !idx.records.is_empty() {
                log::info!("{} was removed; clearing cached scores", self.path.display());
                idx.records.clear();
            }
        }
    }

    pub fn get(&self, model_id: &str, hash: &str, candidate: &str) -> Option<CacheRecord> {
        self.get_many(model_id, hash, std::slice::from_ref(&candidate.to_string()))
            .pop()
            .flatten()
    }

    /// Looks up several candidates of one construction, in order.
    pub fn get_many(&self, model_id: &str, hash: &str, candidates: &[String]) -> Vec<Option<CacheRecord>> {
        self.sync_with_disk();
        let idx = self.index.read().unwrap();
        candidates
            .iter()
            .map(|c| {
                let key = (model_id.to_string(), hash.to_string(), c.clone());
                idx.records.get(&key).map(|(r, _)| r.clone())
            })
            .collect()
    }

    /// The stored line for a record, exactly as it sits in the file.
    pub fn raw_line(&self, model_id: &str, hash: &str, candidate: &str) -> Option<String> {
        let key = (model_id.to_string(), hash.to_string(), candidate.to_string());
        self.index.read().unwrap().records.get(&key).map(|(_, l)| l.clone())
    }

    /// Appends records not already present.
    pub fn insert(&self, records: Vec<CacheRecord>) -> Result<(), ScoreError> {
        let _guard = self.writer.lock().unwrap();
        self.sync_with_disk();
        let mut fresh = Vec::new();
        {
            let idx = self.index.read().unwrap();
            let mut seen = HashSet::new();
            for rec in records {
                let key = (
                    rec.model_id.clone(),
                    rec.construction_hash.clone(),
                    rec.candidate.clone(),
                );
                if !idx.records.contains_key(&key) && seen.insert(key.clone()) {
                    let line = serde_json::to_string(&rec).expect("cache record serializes");
                    fresh.push((key, rec, line));
                }
            }
        }
        if fresh.is_empty() {
            return Ok(());
        }
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| io_err(&self.path, e))?;
        let mut buf = String::new();
        for (_, _, line) in &fresh {
            buf.push_str(line);
            buf.push('\n');
        }
        file.write_all(buf.as_bytes()).map_err(|e| io_err(&self.path, e))?;
        let mut idx = self.index.write().unwrap();
        for (key, rec, line) in fresh {
            idx.records.insert(key, (rec, line));
        }
        Ok(())
    }
}

/// A scorer that consults the cache first and only sends misses to the
/// backend. Without a backend it runs cache-only and a miss is an error.
pub struct CachedScorer {
    model_id: String,
    mode: ScoringMode,
    inner: Option<Arc<dyn Scorer>>,
    cache: Arc<ScoreCache>,
}

pub fn cached(inner: Arc<dyn Scorer>, cache: Arc<ScoreCache>) -> CachedScorer {
    CachedScorer::new(inner, cache)
}

impl CachedScorer {
    pub fn new(inner: Arc<dyn Scorer>, cache: Arc<ScoreCache>) -> Self {
        CachedScorer {
            model_id: inner.model_id().to_string(),
            mode: inner.mode(),
            inner: Some(inner),
            cache,
        }
    }

    pub fn offline(model_id: &str, mode: ScoringMode, cache: Arc<ScoreCache>) -> Self {
        CachedScorer {
            model_id: model_id.to_string(),
            mode,
            inner: None,
            cache,
        }
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl Scorer for CachedScorer {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn mode(&self) -> ScoringMode {
        self.mode
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<ScoreEntry>, ScoreError> {
        let hash = construction_hash(request.mode, &request.full_text, request.slot_span);
        let mut found: HashMap<String, ScoreEntry> = HashMap::new();
        let mut misses = Vec::new();
        let mut missed = HashSet::new();
        let hits = self.cache.get_many(&self.model_id, &hash, &request.candidates);
        for (c, hit) in request.candidates.iter().zip(hits) {
            match hit {
                Some(r) => {
                    found.insert(
                        c.clone(),
                        ScoreEntry {
                            candidate: c.clone(),
                            logprob: r.logprob,
                            token_count: r.token_count,
                        },
                    );
                }
                None if missed.insert(c.as_str()) => misses.push(c.clone()),
                None => {}
            }
        }
        if !misses.is_empty() {
            let inner = self.inner.as_ref().ok_or_else(|| ScoreError::CacheMiss {
                model_id: self.model_id.clone(),
                candidate: misses[0].clone(),
            })?;
            let entries = inner.score(&request.with_candidates(misses.clone()))?;
            let by_candidate: HashMap<&str, &ScoreEntry> = entries.iter().map(|e| (e.candidate.as_str(), e)).collect();
            let stamp = now();
            let mut records = Vec::new();
            for m in &misses {
                let e = by_candidate
                    .get(m.as_str())
                    .copied()
                    .ok_or_else(|| ScoreError::Protocol(format!("no result for candidate `{m}`")))?;
                records.push(CacheRecord {
                    model_id: self.model_id.clone(),
                    construction_hash: hash.clone(),
                    mode: request.mode,
                    candidate: m.clone(),
                    logprob: e.logprob,
                    token_count: e.token_count,
                    created_at: stamp,
                });
                found.insert(m.clone(), e.clone());
            }
            self.cache.insert(records)?;
        }
        Ok(request
            .candidates
            .iter()
            .filter_map(|c| found.get(c).cloned())
            .collect())
    }
}
