//! End-to-end runs: ingest, render, score, weight, analyse.
//!
//! A [`Pipeline`] owns the loaded items, the alternative-set snapshot, the
//! embeddings and two scorers (masked for the within-scale analysis,
//! continuation for the cross-scale ones). Scorers are injected, so the same
//! code runs against a live backend, a cache alone, or a test double.

pub mod config;
pub mod plot;
pub mod report;
pub mod reproduce;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alternatives::{self, AlternativeSet, AlternativesError, DataSnapshot};
use crate::concept::{self, ConceptError, EmbeddingTable, WeightedSurprisalResult};
use crate::ingest::{self, DatasetId, DatasetSpec, IngestError, IngestReport, StimulusItem};
use crate::scale::{PartOfSpeech, Scale};
use crate::scoring::subprocess::SubprocessScorer;
use crate::scoring::{self, CachedScorer, ScoreCache, ScoreError, Scorer, ScoringMode};
use crate::stats::{self, AnovaResult, FitResult, ItemKey, PredictorRow, StatsError, TransformRegistry};
use crate::templates::{self, CrossScaleStimulus, TemplateError};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Alternatives(#[from] AlternativesError),
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    MissingInput(String),
}

/// Variable names used in rows, tables and regressions.
pub mod vars {
    pub const SI: &str = "human_si";
    pub const STRING: &str = "string_surprisal";
    pub const CONCEPT: &str = "concept_surprisal";
    pub const PROBABILITY: &str = "probability";
    pub const ACCESSIBILITY: &str = "accessibility";
}

pub const WITHIN_COVARIATES: [&str; 6] = [
    "partitive",
    "strength",
    "mention",
    "subjecthood",
    "modification",
    "sentence_length",
];

pub(crate) fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// The two scorers a run may need.
#[derive(Clone, Default)]
pub struct Scorers {
    pub masked: Option<Arc<dyn Scorer>>,
    pub causal: Option<Arc<dyn Scorer>>,
}

impl Scorers {
    /// Builds cache-wrapped scorers from the config: cache-only when
    /// offline, otherwise one backend process per model, started only for
    /// the analyses the run needs.
    pub fn from_config(config: &RunConfig) -> Result<(Self, Arc<ScoreCache>), PipelineError> {
        let cache = Arc::new(ScoreCache::open(&config.cache)?);
        let selected = config.selected();
        let need_masked = selected.contains(&DatasetId::Degen2015);
        let need_causal = selected.iter().any(|d| d.is_cross_scale());
        let make = |model: &str, mode: ScoringMode| -> Result<Arc<dyn Scorer>, PipelineError> {
            if config.offline {
                return Ok(Arc::new(CachedScorer::offline(model, mode, cache.clone())));
            }
            let (program, args) = config
                .models
                .backend_command
                .split_first()
                .ok_or_else(|| PipelineError::Config("models.backend_command is empty".into()))?;
            let mut args = args.to_vec();
            args.extend(["--model".into(), model.into(), "--mode".into(), mode.as_str().into()]);
            let backend = SubprocessScorer::spawn(model, mode, program, &args)?;
            Ok(Arc::new(CachedScorer::new(Arc::new(backend), cache.clone())))
        };
        let masked = need_masked
            .then(|| make(&config.models.masked, ScoringMode::MaskedSlot))
            .transpose()?;
        let causal = need_causal
            .then(|| make(&config.models.autoregressive, ScoringMode::Continuation))
            .transpose()?;
        Ok((Scorers { masked, causal }, cache))
    }
}

/// Per-item scores before aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub dataset_id: DatasetId,
    pub scale: Scale,
    pub context: String,
    pub construction: Option<String>,
    pub human_si: f64,
    pub string_surprisal: Option<f64>,
    pub concept: Option<WeightedSurprisalResult>,
    pub cloze_accessibility: Option<f64>,
    pub covariates: BTreeMap<String, f64>,
    /// Why a predictor is missing, if one is.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub dataset_id: DatasetId,
    pub scale: Scale,
    pub context: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub dataset_id: DatasetId,
    pub predictor: String,
    pub response: String,
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

/// Correlation recomputed without the point of highest leverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageCheck {
    pub predictor: String,
    pub removed: Scale,
    pub with_point: CorrelationRow,
    pub without_point: CorrelationRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKEntry {
    pub dataset_id: DatasetId,
    pub scale: Scale,
    pub context: String,
    pub top: Vec<(String, f64)>,
    /// Alternatives down to and including the tested strong scalemate.
    pub ranking: Vec<(String, f64)>,
    pub strong_rank: Option<usize>,
}

impl TopKEntry {
    /// 1-based rank of `word` if it is within `ranking`.
    pub fn rank_of(&self, word: &str) -> Option<usize> {
        self.ranking.iter().position(|(w, _)| w == word).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltSetSummary {
    pub pos: PartOfSpeech,
    pub size: usize,
    pub cutoff: Option<usize>,
    pub exclusions_applied: usize,
    pub force_included: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSection {
    pub full: FitResult,
    pub null: Option<FitResult>,
    pub anova: Option<AnovaResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinScaleSection {
    pub items: Vec<ItemScore>,
    pub rows: Vec<PredictorRow>,
    pub correlations: Vec<CorrelationRow>,
    pub regression: Option<RegressionSection>,
    pub exclusions: Vec<Exclusion>,
    pub notices: Vec<String>,
    pub alternatives: AltSetSummary,
    #[serde(skip)]
    pub alternative_set: Option<AlternativeSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossScaleSection {
    pub dataset_id: DatasetId,
    pub items: Vec<ItemScore>,
    /// One row per scale.
    pub rows: Vec<PredictorRow>,
    pub correlations: Vec<CorrelationRow>,
    pub leverage_check: Option<LeverageCheck>,
    pub regression: Option<RegressionSection>,
    pub top_k: Vec<TopKEntry>,
    pub exclusions: Vec<Exclusion>,
    pub notices: Vec<String>,
    pub alternatives: Vec<AltSetSummary>,
    #[serde(skip)]
    pub alternative_sets: Vec<AlternativeSet>,
}

impl CrossScaleSection {
    pub fn correlation(&self, predictor: &str) -> Option<&CorrelationRow> {
        self.correlations
            .iter()
            .find(|c| c.predictor == predictor && c.response == vars::SI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationControl {
    pub seed: u64,
    pub shuffles: usize,
    pub mean_rho: f64,
    pub mean_abs_rho: f64,
    /// Share of shuffles with |rho| at least the observed |rho|, add-one smoothed.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessibilitySection {
    pub correlation: CorrelationRow,
    pub permutation: Option<PermutationControl>,
    pub points: Vec<(Scale, f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub within: Option<WithinScaleSection>,
    pub cross: Vec<CrossScaleSection>,
    pub accessibility: Option<AccessibilitySection>,
    pub ingest: Vec<(DatasetId, IngestReport)>,
    pub notices: Vec<String>,
}

impl RunResults {
    pub fn cross_section(&self, id: DatasetId) -> Option<&CrossScaleSection> {
        self.cross.iter().find(|s| s.dataset_id == id)
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    scorers: Scorers,
    items: BTreeMap<DatasetId, Vec<StimulusItem>>,
    ingest_reports: Vec<(DatasetId, IngestReport)>,
    snapshot: DataSnapshot,
    embeddings: Option<Arc<EmbeddingTable>>,
    stimuli: HashMap<(String, String), CrossScaleStimulus>,
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Items per dataset plus the ingest report of each file read.
pub type LoadedItems = (BTreeMap<DatasetId, Vec<StimulusItem>>, Vec<(DatasetId, IngestReport)>);

/// Loads the selected datasets, joining Cloze accessibility onto ronai2022.
pub fn load_items(config: &RunConfig) -> Result<LoadedItems, PipelineError> {
    let mut items = BTreeMap::new();
    let mut reports = Vec::new();
    for id in config.selected() {
        let path = config
            .data
            .get(&id)
            .ok_or_else(|| PipelineError::MissingInput(format!("no file configured for {id}")))?;
        let mut spec = DatasetSpec::new(id, path);
        if !config.analyses.check_counts {
            spec = spec.without_count_checks();
        }
        let loaded = ingest::load_dataset(&spec)?;
        let mut list = loaded.items;
        if id == DatasetId::Ronai2022 {
            if let Some(cloze) = config.data.get(&DatasetId::Ronai2022Cloze) {
                list = ingest::join_cloze(&list, &ingest::load_cloze(cloze)?)?;
            }
        }
        reports.push((id, loaded.report));
        items.insert(id, list);
    }
    Ok((items, reports))
}

impl Pipeline {
    /// Loads everything the config names.
    pub fn new(config: RunConfig, scorers: Scorers) -> Result<Self, PipelineError> {
        config.validate()?;
        let (items, reports) = load_items(&config)?;
        let snapshot = DataSnapshot::load(&Self::data_dir(&config))?;
        let stimuli = match &config.stimuli {
            Some(p) => templates::read_stimuli(BufReader::new(File::open(p).map_err(io_err(p))?))?,
            None => Vec::new(),
        };
        let mut pipeline = Pipeline::from_parts(config, scorers, items, snapshot, None)?;
        pipeline.set_ingest_reports(reports);
        pipeline.set_stimuli(stimuli);
        if pipeline.config.analyses.concept {
            let e = pipeline.config.embeddings.clone().expect("validated");
            let keep = pipeline.embedding_vocabulary()?;
            log::info!("loading embeddings for {} words from {}", keep.len(), e.path.display());
            let table = EmbeddingTable::load(&e.path, Some(e.dimension), Some(&keep))?;
            pipeline.embeddings = Some(Arc::new(table));
        }
        Ok(pipeline)
    }

    /// Assembles a pipeline from already-loaded parts.
    pub fn from_parts(
        config: RunConfig,
        scorers: Scorers,
        items: BTreeMap<DatasetId, Vec<StimulusItem>>,
        snapshot: DataSnapshot,
        embeddings: Option<EmbeddingTable>,
    ) -> Result<Self, PipelineError> {
        Ok(Pipeline {
            config,
            scorers,
            items,
            ingest_reports: Vec::new(),
            snapshot,
            embeddings: embeddings.map(Arc::new),
            stimuli: HashMap::new(),
        })
    }

    pub fn data_dir(config: &RunConfig) -> PathBuf {
        config
            .alternatives
            .data_dir
            .clone()
            .unwrap_or_else(alternatives::bundled_data_dir)
    }

    /// Ingest reports to carry into the results, for pipelines assembled
    /// with [`Pipeline::from_parts`].
    pub fn set_ingest_reports(&mut self, reports: Vec<(DatasetId, IngestReport)>) {
        self.ingest_reports = reports;
    }

    pub fn set_stimuli(&mut self, stimuli: Vec<CrossScaleStimulus>) {
        self.stimuli = stimuli
            .into_iter()
            .map(|s| ((s.weak.to_lowercase(), s.strong.to_lowercase()), s))
            .collect();
    }

    pub fn items(&self, id: DatasetId) -> Option<&[StimulusItem]> {
        self.items.get(&id).map(Vec::as_slice)
    }

    fn embedding_vocabulary(&self) -> Result<HashSet<String>, PipelineError> {
        let mut keep: HashSet<String> = alternatives::QUANTIFIERS.iter().map(|s| s.to_string()).collect();
        for pos in [PartOfSpeech::Adj, PartOfSpeech::Adv, PartOfSpeech::Verb] {
            if let Some(tag) = alternatives::penn_tag(pos) {
                keep.extend(self.snapshot.lexicon.words_with_tag(tag).into_iter().map(String::from));
            }
        }
        for items in self.items.values() {
            for it in items {
                keep.insert(it.scale.strong.to_lowercase());
            }
        }
        for s in self.stimuli.values() {
            keep.insert(s.slot_word().to_lowercase());
        }
        Ok(keep)
    }

    fn cutoff(&self, pos: PartOfSpeech) -> Option<usize> {
        let a = &self.config.alternatives;
        match pos {
            PartOfSpeech::Adj => a.adj_cutoff,
            PartOfSpeech::Adv => a.adv_cutoff,
            PartOfSpeech::Verb => a.verb_cutoff,
            PartOfSpeech::Quant => None,
        }
    }

    /// Alternative set for `pos`, with `tested` strong scalemates appended
    /// when the cutoff dropped them.
    pub fn alternative_set(&self, pos: PartOfSpeech, tested: &[String]) -> Result<AlternativeSet, PipelineError> {
        let mut set = self.snapshot.build(pos, self.cutoff(pos))?;
        set.force_include(tested.iter().map(String::as_str));
        Ok(set)
    }

    fn scorer(&self, mode: ScoringMode) -> Result<&Arc<dyn Scorer>, PipelineError> {
        let s = match mode {
            ScoringMode::MaskedSlot => self.scorers.masked.as_ref(),
            ScoringMode::Continuation => self.scorers.causal.as_ref(),
        };
        s.ok_or_else(|| PipelineError::MissingInput(format!("no {} scorer configured", mode.as_str())))
    }

    fn concept_inputs(&self) -> Option<&EmbeddingTable> {
        if self.config.analyses.concept {
            self.embeddings.as_deref()
        } else {
            None
        }
    }

    fn item_score(item: &StimulusItem) -> ItemScore {
        ItemScore {
            dataset_id: item.dataset_id,
            scale: item.scale.clone(),
            context: item.context.clone(),
            construction: None,
            human_si: item.human_si,
            string_surprisal: None,
            concept: None,
            cloze_accessibility: item.cloze_accessibility,
            covariates: item.covariates.clone(),
            note: None,
        }
    }

    /// Scores one construction and derives both predictors.
    fn score_slot(
        &self,
        scorer: &dyn Scorer,
        construction: &templates::ScalarConstruction,
        slot_word: &str,
        set: &AlternativeSet,
        out: &mut ItemScore,
    ) -> Result<Option<HashMap<String, scoring::ScoredAlternative>>, PipelineError> {
        let need_all = self.config.analyses.concept || self.config.analyses.qualitative;
        let candidates: Vec<String> = if need_all {
            set.members().to_vec()
        } else {
            vec![slot_word.to_string()]
        };
        let batch = scoring::score_with_retry(scorer, construction, &candidates, self.config.models.retry_attempts)?;
        let scored = if construction.mode() == ScoringMode::MaskedSlot && self.config.models.renormalize_masked {
            scoring::renormalize(&batch.scored)
        } else {
            batch.scored
        };
        let map: HashMap<String, scoring::ScoredAlternative> =
            scored.into_iter().map(|s| (s.word.clone(), s)).collect();
        out.construction = Some(construction.full_text().to_string());
        match map.get(slot_word) {
            Some(s) => out.string_surprisal = Some(s.surprisal),
            None => out.note = Some(format!("`{slot_word}` could not be scored at the slot")),
        }
        if let Some(emb) = self.concept_inputs() {
            match concept::weighted_average_surprisal(slot_word, set.members(), &map, emb) {
                Ok(r) => out.concept = Some(r),
                Err(e) => {
                    let msg = format!("concept surprisal unavailable: {e}");
                    out.note = Some(match out.note.take() {
                        Some(n) => format!("{n}; {msg}"),
                        None => msg,
                    });
                }
            }
        }
        Ok(need_all.then_some(map))
    }

    fn correlations(
        id: DatasetId,
        rows: &[PredictorRow],
        predictors: &[&str],
        response: &str,
        notices: &mut Vec<String>,
    ) -> Vec<CorrelationRow> {
        let mut out = Vec::new();
        for p in predictors {
            match stats::correlate(rows, p, response) {
                Ok(c) => out.push(CorrelationRow {
                    dataset_id: id,
                    predictor: p.to_string(),
                    response: response.to_string(),
                    rho: c.rho,
                    p: c.p,
                    n: c.n,
                }),
                Err(e) => notices.push(format!("{id}: correlation {p} ~ {response} skipped: {e}")),
            }
        }
        out
    }

    fn regression(
        id: DatasetId,
        rows: &[PredictorRow],
        predictors: &[&str],
        notices: &mut Vec<String>,
    ) -> Option<RegressionSection> {
        let mut needed = vec![vars::SI];
        needed.extend_from_slice(predictors);
        let complete: Vec<PredictorRow> = rows.iter().filter(|r| r.has_all(&needed)).cloned().collect();
        if complete.len() < rows.len() {
            notices.push(format!(
                "{id}: regression uses {} of {} rows (missing predictors)",
                complete.len(),
                rows.len()
            ));
        }
        let registry = TransformRegistry::for_dataset(id);
        let fit = || -> Result<RegressionSection, StatsError> {
            let full = stats::fit_linear(&complete, vars::SI, predictors, &registry)?;
            let null = stats::fit_linear(&complete, vars::SI, &[], &registry)?;
            let anova = stats::anova_nested(&full, &null)?;
            Ok(RegressionSection {
                full,
                null: Some(null),
                anova: Some(anova),
            })
        };
        match fit() {
            Ok(r) => Some(r),
            Err(e) => {
                notices.push(format!("{id}: regression skipped: {e}"));
                None
            }
        }
    }

    fn enabled_predictors(&self) -> Vec<&'static str> {
        let mut p = Vec::new();
        if self.config.analyses.string {
            p.push(vars::STRING);
        }
        if self.config.analyses.concept {
            p.push(vars::CONCEPT);
        }
        p
    }

    /// Within ⟨some, all⟩: masked-slot surprisal of "all", concept surprisal
    /// over the quantifier set, correlations with the similarity ratings and
    /// the full regression with the six item covariates.
    pub fn run_within_scale(&self) -> Result<WithinScaleSection, PipelineError> {
        let id = DatasetId::Degen2015;
        let items = self
            .items(id)
            .ok_or_else(|| PipelineError::MissingInput(format!("{id} not loaded")))?;
        let scorer = self.scorer(ScoringMode::MaskedSlot)?;
        let set = self.alternative_set(PartOfSpeech::Quant, &[])?;
        let scored: Vec<(ItemScore, Option<Exclusion>)> = items
            .par_iter()
            .map(|item| {
                let mut out = Self::item_score(item);
                match templates::build_within_scale(item) {
                    Ok(c) => {
                        self.score_slot(scorer.as_ref(), &c, "all", &set, &mut out)?;
                        Ok((out, None))
                    }
                    Err(e) => {
                        let ex = Exclusion {
                            dataset_id: id,
                            scale: item.scale.clone(),
                            context: item.context.clone(),
                            reason: e.to_string(),
                        };
                        out.note = Some(e.to_string());
                        Ok((out, Some(ex)))
                    }
                }
            })
            .collect::<Result<_, PipelineError>>()?;
        let (items, exclusions): (Vec<ItemScore>, Vec<Option<Exclusion>>) = scored.into_iter().unzip();
        let exclusions: Vec<Exclusion> = exclusions.into_iter().flatten().collect();
        let rows: Vec<PredictorRow> = items
            .iter()
            .filter(|s| s.construction.is_some())
            .map(|s| PredictorRow {
                item_key: ItemKey {
                    dataset_id: id,
                    scale: s.scale.clone(),
                    context_hash: short_hash(&s.context),
                },
                human_si: s.human_si,
                string_surprisal: s.string_surprisal,
                concept_surprisal: s.concept.as_ref().map(|c| c.value),
                covariates: s.covariates.clone(),
            })
            .collect();

        let mut notices = Vec::new();
        let mut predictors = self.enabled_predictors();
        if self.config.analyses.string {
            predictors.push(vars::PROBABILITY);
        }
        let correlations = Self::correlations(id, &rows, &predictors, vars::SI, &mut notices);

        let missing_cov = WITHIN_COVARIATES
            .iter()
            .find(|c| rows.iter().any(|r| !r.covariates.contains_key(**c)));
        let regression = match missing_cov {
            Some(c) => {
                notices.push(format!("{id}: regression aborted: covariate `{c}` missing"));
                None
            }
            None => {
                let mut terms: Vec<&str> = WITHIN_COVARIATES.to_vec();
                terms.extend(self.enabled_predictors());
                Self::regression(id, &rows, &terms, &mut notices)
            }
        };
        Ok(WithinScaleSection {
            items,
            rows,
            correlations,
            regression,
            exclusions,
            notices,
            alternatives: summarize(&set),
            alternative_set: Some(set),
        })
    }

    fn stimulus_for(&self, item: &StimulusItem) -> Result<CrossScaleStimulus, TemplateError> {
        let key = (item.scale.weak.to_lowercase(), item.scale.strong.to_lowercase());
        match self.stimuli.get(&key) {
            Some(s) => Ok(s.clone()),
            None => CrossScaleStimulus::from_context(&item.scale, &item.context),
        }
    }

    /// Across scales for one dataset: continuation surprisal of the tested
    /// strong scalemate, concept surprisal over the POS set, per-scale
    /// correlations, the two-predictor regression against the intercept-only
    /// model, and the top-k inspection for the configured scales.
    pub fn run_cross_scale(&self, id: DatasetId) -> Result<CrossScaleSection, PipelineError> {
        let items = self
            .items(id)
            .ok_or_else(|| PipelineError::MissingInput(format!("{id} not loaded")))?;
        let scorer = self.scorer(ScoringMode::Continuation)?;

        let stimuli: Vec<Result<CrossScaleStimulus, TemplateError>> =
            items.iter().map(|it| self.stimulus_for(it)).collect();
        let mut tested: BTreeMap<PartOfSpeech, Vec<String>> = BTreeMap::new();
        for s in stimuli.iter().flatten() {
            let w = s.slot_word().to_lowercase();
            let list = tested.entry(s.pos).or_default();
            if !list.contains(&w) {
                list.push(w);
            }
        }
        let mut sets: BTreeMap<PartOfSpeech, AlternativeSet> = BTreeMap::new();
        for (pos, words) in &tested {
            sets.insert(*pos, self.alternative_set(*pos, words)?);
        }

        let qualitative: Vec<(String, String)> = if self.config.analyses.qualitative {
            self.config
                .analyses
                .qualitative_scales
                .iter()
                .map(|[w, s]| (w.to_lowercase(), s.to_lowercase()))
                .collect()
        } else {
            Vec::new()
        };
        let k = self.config.analyses.top_k;

        type Scored = (ItemScore, Option<Exclusion>, Option<TopKEntry>);
        let scored: Vec<Scored> = items
            .par_iter()
            .zip(stimuli.par_iter())
            .map(|(item, stim)| -> Result<Scored, PipelineError> {
                let mut out = Self::item_score(item);
                let exclude = |reason: String| Exclusion {
                    dataset_id: id,
                    scale: item.scale.clone(),
                    context: item.context.clone(),
                    reason,
                };
                let stim = match stim {
                    Ok(s) => s,
                    Err(e) => {
                        out.note = Some(e.to_string());
                        return Ok((out, Some(exclude(e.to_string())), None));
                    }
                };
                let construction = match templates::build_cross_scale(stim) {
                    Ok(c) => c,
                    Err(e) => {
                        out.note = Some(e.to_string());
                        return Ok((out, Some(exclude(e.to_string())), None));
                    }
                };
                let slot = stim.slot_word().to_lowercase();
                let set = &sets[&stim.pos];
                let map = self.score_slot(scorer.as_ref(), &construction, &slot, set, &mut out)?;
                let excl = out
                    .string_surprisal
                    .is_none()
                    .then(|| exclude(out.note.clone().unwrap_or_default()));
                let key = (item.scale.weak.to_lowercase(), item.scale.strong.to_lowercase());
                let top = match map {
                    Some(map) if qualitative.contains(&key) => Some(top_k_entry(id, item, &slot, set, &map, k)?),
                    _ => None,
                };
                Ok((out, excl, top))
            })
            .collect::<Result<_, _>>()?;

        let mut item_scores = Vec::new();
        let mut exclusions = Vec::new();
        let mut top_k = Vec::new();
        for (s, e, t) in scored {
            item_scores.push(s);
            exclusions.extend(e);
            top_k.extend(t);
        }
        let rows = aggregate_by_scale(id, &item_scores);

        let mut notices = Vec::new();
        let predictors = self.enabled_predictors();
        let correlations = Self::correlations(id, &rows, &predictors, vars::SI, &mut notices);
        let leverage_check = if self.config.analyses.string {
            leverage_check(id, &rows, vars::STRING)
        } else {
            None
        };
        let regression = if predictors.is_empty() {
            None
        } else {
            Self::regression(id, &rows, &predictors, &mut notices)
        };
        let sets: Vec<AlternativeSet> = sets.into_values().collect();
        Ok(CrossScaleSection {
            dataset_id: id,
            items: item_scores,
            rows,
            correlations,
            leverage_check,
            regression,
            top_k,
            exclusions,
            notices,
            alternatives: sets.iter().map(summarize).collect(),
            alternative_sets: sets,
        })
    }

    /// Correlation between string surprisal and Cloze accessibility over the
    /// scales of one cross-scale section, with a seeded shuffle control.
    pub fn run_accessibility(&self, section: &CrossScaleSection) -> Result<AccessibilitySection, PipelineError> {
        let pairs: Vec<(Scale, f64, f64)> = section
            .rows
            .iter()
            .filter_map(|r| {
                Some((
                    r.item_key.scale.clone(),
                    r.get(vars::STRING).filter(|v| v.is_finite())?,
                    r.get(vars::ACCESSIBILITY).filter(|v| v.is_finite())?,
                ))
            })
            .collect();
        if pairs.is_empty() {
            return Err(PipelineError::MissingInput(format!(
                "{}: no scale has both a string surprisal and Cloze accessibility",
                section.dataset_id
            )));
        }
        let x: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let c = stats::pearson(&x, &y).map_err(|e| match e {
            StatsError::ZeroVariance(v) => StatsError::ZeroVariance(if v == "x" {
                vars::STRING.into()
            } else {
                vars::ACCESSIBILITY.into()
            }),
            e => e,
        })?;
        let permutation = (self.config.analyses.permutations > 0)
            .then(|| permutation_control(&x, &y, c.rho, self.config.seed, self.config.analyses.permutations));
        Ok(AccessibilitySection {
            correlation: CorrelationRow {
                dataset_id: section.dataset_id,
                predictor: vars::STRING.into(),
                response: vars::ACCESSIBILITY.into(),
                rho: c.rho,
                p: c.p,
                n: c.n,
            },
            permutation,
            points: pairs,
        })
    }

    /// Runs every configured analysis. Analysis-level problems become
    /// notices; scoring failures abort.
    pub fn run(&self) -> Result<RunResults, PipelineError> {
        let mut results = RunResults {
            ingest: self.ingest_reports.clone(),
            ..RunResults::default()
        };
        for id in self.config.selected() {
            if id == DatasetId::Degen2015 {
                results.within = Some(self.run_within_scale()?);
            } else if id.is_cross_scale() {
                results.cross.push(self.run_cross_scale(id)?);
            }
        }
        if self.config.analyses.accessibility && self.config.analyses.string {
            match results.cross_section(DatasetId::Ronai2022) {
                Some(s) if s.rows.iter().any(|r| r.covariates.contains_key(vars::ACCESSIBILITY)) => {
                    match self.run_accessibility(s) {
                        Ok(a) => results.accessibility = Some(a),
                        Err(e) => results.notices.push(format!("accessibility analysis skipped: {e}")),
                    }
                }
                Some(_) => results
                    .notices
                    .push("accessibility analysis skipped: no Cloze data joined".into()),
                None => {}
            }
        }
        Ok(results)
    }

    /// Scores every selected dataset without analysing (fills the cache).
    pub fn score_only(&self) -> Result<usize, PipelineError> {
        let mut n = 0;
        for id in self.config.selected() {
            if id == DatasetId::Degen2015 {
                n += self.run_within_scale()?.items.len();
            } else if id.is_cross_scale() {
                n += self.run_cross_scale(id)?.items.len();
            }
        }
        Ok(n)
    }

    /// The alternative sets this run would use, per dataset.
    pub fn build_alternatives(&self) -> Result<Vec<(DatasetId, AlternativeSet)>, PipelineError> {
        let mut out = Vec::new();
        for id in self.config.selected() {
            let items = &self.items[&id];
            if id == DatasetId::Degen2015 {
                out.push((id, self.alternative_set(PartOfSpeech::Quant, &[])?));
                continue;
            }
            let mut tested: BTreeMap<PartOfSpeech, Vec<String>> = BTreeMap::new();
            for item in items {
                if let Ok(s) = self.stimulus_for(item) {
                    let w = s.slot_word().to_lowercase();
                    let list = tested.entry(s.pos).or_default();
                    if !list.contains(&w) {
                        list.push(w);
                    }
                }
            }
            for (pos, words) in tested {
                out.push((id, self.alternative_set(pos, &words)?));
            }
        }
        Ok(out)
    }

    pub fn ingest_reports(&self) -> &[(DatasetId, IngestReport)] {
        &self.ingest_reports
    }
}

fn summarize(set: &AlternativeSet) -> AltSetSummary {
    AltSetSummary {
        pos: set.pos,
        size: set.len(),
        cutoff: set.provenance.cutoff,
        exclusions_applied: set.provenance.exclusions_applied.len(),
        force_included: set.provenance.force_included.clone(),
    }
}

fn top_k_entry(
    id: DatasetId,
    item: &StimulusItem,
    slot: &str,
    set: &AlternativeSet,
    map: &HashMap<String, scoring::ScoredAlternative>,
    k: usize,
) -> Result<TopKEntry, PipelineError> {
    let top = concept::top_k_alternatives(set.members(), map, k)?;
    let all = concept::top_k_alternatives(set.members(), map, set.len().max(1))?;
    let strong_rank = all.iter().position(|(w, _)| w == slot).map(|i| i + 1);
    let keep = strong_rank.unwrap_or(0).max(k).min(all.len());
    Ok(TopKEntry {
        dataset_id: id,
        scale: item.scale.clone(),
        context: item.context.clone(),
        top,
        ranking: all[..keep].to_vec(),
        strong_rank,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// One row per scale: SI and predictors averaged over the scale's contexts.
pub fn aggregate_by_scale(id: DatasetId, items: &[ItemScore]) -> Vec<PredictorRow> {
    let mut groups: IndexMap<&Scale, Vec<&ItemScore>> = IndexMap::new();
    for it in items {
        groups.entry(&it.scale).or_default().push(it);
    }
    groups
        .into_iter()
        .filter(|(_, g)| g.iter().any(|i| i.construction.is_some()))
        .map(|(scale, g)| {
            let contexts: Vec<&str> = g.iter().map(|i| i.context.as_str()).collect();
            let mut covariates = BTreeMap::new();
            if let Some(a) = mean(g.iter().filter_map(|i| i.cloze_accessibility)) {
                covariates.insert(vars::ACCESSIBILITY.to_string(), a);
            }
            PredictorRow {
                item_key: ItemKey {
                    dataset_id: id,
                    scale: scale.clone(),
                    context_hash: short_hash(&contexts.join("\n")),
                },
                human_si: mean(g.iter().map(|i| i.human_si)).unwrap_or(f64::NAN),
                string_surprisal: mean(g.iter().filter_map(|i| i.string_surprisal)),
                concept_surprisal: mean(g.iter().filter_map(|i| i.concept.as_ref().map(|c| c.value))),
                covariates,
            }
        })
        .collect()
}

/// Drops the row whose predictor lies furthest from the predictor mean (the
/// highest-leverage point of a one-predictor regression) and recomputes.
pub fn leverage_check(id: DatasetId, rows: &[PredictorRow], predictor: &str) -> Option<LeverageCheck> {
    let usable: Vec<&PredictorRow> = rows.iter().filter(|r| r.has_all(&[predictor, vars::SI])).collect();
    if usable.len() < 4 {
        return None;
    }
    let xs: Vec<f64> = usable.iter().map(|r| r.get(predictor).unwrap()).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let (idx, _) = xs
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1 - m).abs().total_cmp(&(b.1 - m).abs()))?;
    let corr = |rs: &[&PredictorRow]| -> Option<CorrelationRow> {
        let x: Vec<f64> = rs.iter().map(|r| r.get(predictor).unwrap()).collect();
        let y: Vec<f64> = rs.iter().map(|r| r.human_si).collect();
        let c = stats::pearson(&x, &y).ok()?;
        Some(CorrelationRow {
            dataset_id: id,
            predictor: predictor.into(),
            response: vars::SI.into(),
            rho: c.rho,
            p: c.p,
            n: c.n,
        })
    };
    let with_point = corr(&usable)?;
    let mut rest = usable.clone();
    let removed = rest.remove(idx).item_key.scale.clone();
    let without_point = corr(&rest)?;
    Some(LeverageCheck {
        predictor: predictor.into(),
        removed,
        with_point,
        without_point,
    })
}

/// Pearson correlation under repeated shuffles of `y`.
pub fn permutation_control(x: &[f64], y: &[f64], observed: f64, seed: u64, shuffles: usize) -> PermutationControl {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = y.to_vec();
    let (mut sum, mut sum_abs, mut extreme) = (0.0, 0.0, 0usize);
    let mut done = 0;
    for _ in 0..shuffles {
        y.shuffle(&mut rng);
        let Ok(c) = stats::pearson(x, &y) else { continue };
        sum += c.rho;
        sum_abs += c.rho.abs();
        if c.rho.abs() >= observed.abs() - 1e-12 {
            extreme += 1;
        }
        done += 1;
    }
    let d = done.max(1) as f64;
    PermutationControl {
        seed,
        shuffles: done,
        mean_rho: sum / d,
        mean_abs_rho: sum_abs / d,
        p_value: (extreme + 1) as f64 / (done + 1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scale: (&str, &str), si: f64, s: f64) -> PredictorRow {
        PredictorRow {
            item_key: ItemKey {
                dataset_id: DatasetId::Gotzner2018,
                scale: Scale::new(scale.0, scale.1, PartOfSpeech::Adj).unwrap(),
                context_hash: String::new(),
            },
            human_si: si,
            string_surprisal: Some(s),
            concept_surprisal: None,
            covariates: BTreeMap::new(),
        }
    }

    #[test]
    fn leverage_point_is_the_extreme_predictor() {
        let rows = vec![
            row(("a", "b"), 0.1, 1.0),
            row(("c", "d"), 0.2, 2.0),
            row(("e", "f"), 0.4, 3.0),
            row(("g", "h"), 0.3, 2.5),
            row(("i", "j"), 0.9, 20.0),
        ];
        let l = leverage_check(DatasetId::Gotzner2018, &rows, vars::STRING).unwrap();
        assert_eq!(l.removed.weak, "i");
        assert_eq!(l.without_point.n, 4);
    }

    #[test]
    fn permutation_is_seeded() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.5 + (v * 7.0).sin()).collect();
        let a = permutation_control(&x, &y, 0.9, 7, 200);
        let b = permutation_control(&x, &y, 0.9, 7, 200);
        assert_eq!(a, b);
        assert!(a.mean_rho.abs() < 0.05);
        assert!(a.p_value < 0.01);
    }
}
