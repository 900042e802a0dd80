//! Writes a run's tables, plots, summary and manifest to an output directory.
//!
//! Tables are tab-separated with a header row. Nothing time- or
//! host-dependent is written into tables, so identical inputs give
//! byte-identical tables.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{plot, vars, CorrelationRow, PipelineError, RunConfig, RunResults};
use crate::alternatives::AlternativeSet;
use crate::ingest::DatasetId;
use crate::stats::PredictorRow;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub masked_model: String,
    pub autoregressive_model: String,
    pub seed: u64,
    pub offline: bool,
    pub counts: Vec<DatasetCount>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCount {
    pub dataset_id: DatasetId,
    pub items: usize,
    pub scales: usize,
    pub expected_items: Option<usize>,
    pub expected_scales: Option<usize>,
}

/// Paths of everything written.
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub tables: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), PipelineError> {
    let mut f = File::open(path).map_err(io(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(io(path))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((hex::encode(h.finalize()), total))
}

fn digest(role: &str, path: &Path) -> Result<FileDigest, PipelineError> {
    let (sha256, bytes) = sha256_file(path)?;
    Ok(FileDigest {
        role: role.into(),
        path: path.display().to_string(),
        sha256,
        bytes,
    })
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "NA".into())
}

struct Tsv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Tsv {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self, PipelineError> {
        let file = File::create(&path).map_err(io(&path))?;
        let mut t = Tsv {
            out: BufWriter::new(file),
            path,
        };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), PipelineError> {
        let line = fields
            .into_iter()
            .map(|f| f.replace(['\t', '\n', '\r'], " "))
            .collect::<Vec<_>>()
            .join("\t");
        writeln!(self.out, "{line}").map_err(io(&self.path))
    }

    fn finish(mut self) -> Result<PathBuf, PipelineError> {
        self.out.flush().map_err(io(&self.path))?;
        Ok(self.path)
    }
}

fn correlation_fields(c: &CorrelationRow) -> Vec<String> {
    vec![
        c.dataset_id.to_string(),
        c.predictor.clone(),
        c.response.clone(),
        num(c.rho),
        num(c.p),
        c.n.to_string(),
    ]
}

fn write_rows(path: PathBuf, rows: &[PredictorRow]) -> Result<PathBuf, PipelineError> {
    let mut t = Tsv::create(
        path,
        &[
            "dataset",
            "weak",
            "strong",
            "pos",
            "context_hash",
            vars::SI,
            vars::STRING,
            vars::CONCEPT,
            "covariates",
        ],
    )?;
    for r in rows {
        let covs = r
            .covariates
            .iter()
            .map(|(k, v)| format!("{k}={}", num(*v)))
            .collect::<Vec<_>>()
            .join(";");
        t.row([
            r.item_key.dataset_id.to_string(),
            r.item_key.scale.weak.clone(),
            r.item_key.scale.strong.clone(),
            r.item_key.scale.pos.to_string(),
            r.item_key.context_hash.clone(),
            num(r.human_si),
            opt(r.string_surprisal),
            opt(r.concept_surprisal),
            covs,
        ])?;
    }
    t.finish()
}

fn write_items(path: PathBuf, items: &[super::ItemScore]) -> Result<PathBuf, PipelineError> {
    let mut t = Tsv::create(
        path,
        &[
            "dataset",
            "weak",
            "strong",
            "context",
            "construction",
            vars::SI,
            vars::STRING,
            vars::CONCEPT,
            "contributing",
            "dropped_oov",
            "dropped_nonpositive_weight",
            "dropped_unscored",
            "note",
        ],
    )?;
    for it in items {
        let c = it.concept.as_ref();
        t.row([
            it.dataset_id.to_string(),
            it.scale.weak.clone(),
            it.scale.strong.clone(),
            it.context.clone(),
            it.construction.clone().unwrap_or_default(),
            num(it.human_si),
            opt(it.string_surprisal),
            opt(c.map(|c| c.value)),
            c.map(|c| c.contributing.to_string()).unwrap_or_default(),
            c.map(|c| c.dropped_oov.len().to_string()).unwrap_or_default(),
            c.map(|c| c.dropped_nonpositive_weight.len().to_string())
                .unwrap_or_default(),
            c.map(|c| c.dropped_unscored.len().to_string()).unwrap_or_default(),
            it.note.clone().unwrap_or_default(),
        ])?;
    }
    t.finish()
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf, PipelineError> {
    fs::write(&path, text).map_err(io(&path))?;
    Ok(path)
}

/// Writes alternative sets as JSON, one file per (dataset, POS).
pub fn write_alternatives(dir: &Path, sets: &[(DatasetId, AlternativeSet)]) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    sets.iter()
        .map(|(id, set)| {
            let path = dir.join(format!("{id}_{}.json", set.pos.as_str().to_lowercase()));
            let json = serde_json::to_string_pretty(set).expect("set serializes");
            write_text(path, &(json + "\n"))
        })
        .collect()
}

#[derive(Serialize)]
struct Summary<'a> {
    config_digest: String,
    results: &'a RunResults,
}

/// Writes the full report for a finished run.
pub fn write_report(config: &RunConfig, results: &RunResults, out: &Path) -> Result<ReportBundle, PipelineError> {
    let plots_dir = out.join("plots");
    fs::create_dir_all(&plots_dir).map_err(io(&plots_dir))?;
    let mut b = ReportBundle {
        dir: out.to_path_buf(),
        ..ReportBundle::default()
    };

    // correlations
    let mut t = Tsv::create(
        out.join("correlations.tsv"),
        &["dataset", "predictor", "response", "rho", "p", "n"],
    )?;
    if let Some(w) = &results.within {
        for c in &w.correlations {
            t.row(correlation_fields(c))?;
        }
    }
    for s in &results.cross {
        for c in &s.correlations {
            t.row(correlation_fields(c))?;
        }
    }
    if let Some(a) = &results.accessibility {
        t.row(correlation_fields(&a.correlation))?;
    }
    b.tables.push(t.finish()?);

    // max-leverage recheck
    let mut t = Tsv::create(
        out.join("leverage_check.tsv"),
        &[
            "dataset",
            "predictor",
            "removed_weak",
            "removed_strong",
            "rho_all",
            "p_all",
            "n_all",
            "rho_without",
            "p_without",
            "n_without",
        ],
    )?;
    for s in &results.cross {
        if let Some(l) = &s.leverage_check {
            t.row([
                s.dataset_id.to_string(),
                l.predictor.clone(),
                l.removed.weak.clone(),
                l.removed.strong.clone(),
                num(l.with_point.rho),
                num(l.with_point.p),
                l.with_point.n.to_string(),
                num(l.without_point.rho),
                num(l.without_point.p),
                l.without_point.n.to_string(),
            ])?;
        }
    }
    b.tables.push(t.finish()?);

    // regressions and ANOVA
    let mut reg = Tsv::create(
        out.join("regression.tsv"),
        &["dataset", "predictor", "beta", "se", "t", "p", "n"],
    )?;
    let mut anova = Tsv::create(
        out.join("anova.tsv"),
        &[
            "dataset",
            "f",
            "p",
            "df_numerator",
            "df_denominator",
            "rss_full",
            "rss_null",
        ],
    )?;
    let sections = results
        .within
        .as_ref()
        .map(|w| (DatasetId::Degen2015, w.regression.as_ref()))
        .into_iter()
        .chain(results.cross.iter().map(|s| (s.dataset_id, s.regression.as_ref())));
    for (id, r) in sections {
        let Some(r) = r else { continue };
        for term in &r.full.terms {
            reg.row([
                id.to_string(),
                term.name.clone(),
                num(term.beta),
                num(term.se),
                num(term.t),
                num(term.p),
                r.full.n.to_string(),
            ])?;
        }
        if let (Some(a), Some(null)) = (&r.anova, &r.null) {
            anova.row([
                id.to_string(),
                num(a.f_statistic),
                num(a.p_value),
                a.df_numerator.to_string(),
                a.df_denominator.to_string(),
                num(r.full.residual_ss),
                num(null.residual_ss),
            ])?;
        }
    }
    b.tables.push(reg.finish()?);
    b.tables.push(anova.finish()?);

    // per-dataset rows and items
    if let Some(w) = &results.within {
        b.tables.push(write_rows(out.join("rows_degen2015.tsv"), &w.rows)?);
        b.tables.push(write_items(out.join("items_degen2015.tsv"), &w.items)?);
    }
    for s in &results.cross {
        b.tables
            .push(write_rows(out.join(format!("rows_{}.tsv", s.dataset_id)), &s.rows)?);
        b.tables
            .push(write_items(out.join(format!("items_{}.tsv", s.dataset_id)), &s.items)?);
    }

    // exclusions
    let mut t = Tsv::create(
        out.join("exclusions.tsv"),
        &["dataset", "weak", "strong", "context", "reason"],
    )?;
    let within_ex = results.within.iter().flat_map(|w| w.exclusions.iter());
    for e in within_ex.chain(results.cross.iter().flat_map(|s| s.exclusions.iter())) {
        t.row([
            e.dataset_id.to_string(),
            e.scale.weak.clone(),
            e.scale.strong.clone(),
            e.context.clone(),
            e.reason.clone(),
        ])?;
    }
    b.tables.push(t.finish()?);

    // alternative sets
    let mut t = Tsv::create(
        out.join("alternative_sets.tsv"),
        &[
            "dataset",
            "pos",
            "size",
            "cutoff",
            "exclusions_applied",
            "force_included",
        ],
    )?;
    let mut summaries: Vec<(DatasetId, &super::AltSetSummary)> = Vec::new();
    if let Some(w) = &results.within {
        summaries.push((DatasetId::Degen2015, &w.alternatives));
    }
    for s in &results.cross {
        summaries.extend(s.alternatives.iter().map(|a| (s.dataset_id, a)));
    }
    for (id, a) in summaries {
        t.row([
            id.to_string(),
            a.pos.to_string(),
            a.size.to_string(),
            a.cutoff.map(|c| c.to_string()).unwrap_or_else(|| "NA".into()),
            a.exclusions_applied.to_string(),
            a.force_included.join(";"),
        ])?;
    }
    b.tables.push(t.finish()?);

    // top-k
    let mut t = Tsv::create(
        out.join("top_k.tsv"),
        &["dataset", "weak", "strong", "rank", "alternative", "probability"],
    )?;
    for s in &results.cross {
        for e in &s.top_k {
            for (i, (w, p)) in e.ranking.iter().enumerate() {
                t.row([
                    s.dataset_id.to_string(),
                    e.scale.weak.clone(),
                    e.scale.strong.clone(),
                    (i + 1).to_string(),
                    w.clone(),
                    num(*p),
                ])?;
            }
            let bars: Vec<(String, f64)> = e.top.clone();
            let name = format!("top_k_{}_{}_{}.svg", s.dataset_id, e.scale.weak, e.scale.strong);
            let title = format!("{}: top alternatives for {}", s.dataset_id, e.scale);
            b.plots.push(write_text(
                plots_dir.join(name),
                &plot::bars(&title, "probability", &bars, Some(&e.scale.strong)),
            )?);
        }
    }
    b.tables.push(t.finish()?);

    // ingest counts
    let mut t = Tsv::create(
        out.join("ingest.tsv"),
        &[
            "dataset",
            "items",
            "scales",
            "expected_items",
            "expected_scales",
            "rows_read",
            "rejected_out_of_bounds",
            "dropped_multi_word_scales",
        ],
    )?;
    for (id, r) in &results.ingest {
        t.row([
            id.to_string(),
            r.items.to_string(),
            r.scales.to_string(),
            id.expected_items()
                .map(|v| v.to_string())
                .unwrap_or_else(|| "NA".into()),
            id.expected_scales()
                .map(|v| v.to_string())
                .unwrap_or_else(|| "NA".into()),
            r.rows_read.to_string(),
            r.rejected_out_of_bounds.to_string(),
            r.dropped_multi_word_scales.to_string(),
        ])?;
    }
    b.tables.push(t.finish()?);

    // scatter plots
    let scatter = |rows: &[PredictorRow], x: &str| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.has_all(&[x, vars::SI]))
            .map(|r| (r.get(x).unwrap(), r.human_si))
            .collect()
    };
    if let Some(w) = &results.within {
        for x in [vars::STRING, vars::CONCEPT, vars::PROBABILITY] {
            let pts = scatter(&w.rows, x);
            if !pts.is_empty() {
                let svg = plot::scatter(&format!("degen2015: SI rating vs {x}"), x, "SI rating", &pts);
                b.plots
                    .push(write_text(plots_dir.join(format!("within_{x}.svg")), &svg)?);
            }
        }
    }
    for s in &results.cross {
        for x in [vars::STRING, vars::CONCEPT] {
            let pts = scatter(&s.rows, x);
            if !pts.is_empty() {
                let svg = plot::scatter(&format!("{}: SI rate vs {x}", s.dataset_id), x, "SI rate", &pts);
                b.plots.push(write_text(
                    plots_dir.join(format!("cross_{}_{x}.svg", s.dataset_id)),
                    &svg,
                )?);
            }
        }
    }
    if let Some(a) = &results.accessibility {
        let pts: Vec<(f64, f64)> = a.points.iter().map(|(_, s, acc)| (*s, *acc)).collect();
        let svg = plot::scatter(
            "ronai2022: accessibility vs string surprisal",
            vars::STRING,
            "Cloze accessibility",
            &pts,
        );
        b.plots.push(write_text(plots_dir.join("accessibility.svg"), &svg)?);
    }

    // alternative sets in full
    let mut sets = Vec::new();
    if let Some(s) = results.within.as_ref().and_then(|w| w.alternative_set.clone()) {
        sets.push((DatasetId::Degen2015, s));
    }
    for s in &results.cross {
        sets.extend(s.alternative_sets.iter().cloned().map(|a| (s.dataset_id, a)));
    }
    b.tables.extend(write_alternatives(&out.join("alternatives"), &sets)?);

    // summary
    let summary = Summary {
        config_digest: config.digest(),
        results,
    };
    b.summary = write_text(
        out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;

    // manifest
    let mut inputs = Vec::new();
    for (id, path) in &config.data {
        inputs.push(digest(&format!("dataset:{id}"), path)?);
    }
    if let Some(p) = &config.stimuli {
        inputs.push(digest("stimuli", p)?);
    }
    if let Some(e) = &config.embeddings {
        if config.analyses.concept {
            inputs.push(digest("embeddings", &e.path)?);
        }
    }
    let data_dir = super::Pipeline::data_dir(config);
    for name in [
        "lexicon.tsv",
        "frequency.tsv",
        "exclusions_adj.txt",
        "exclusions_adv.txt",
        "exclusions_verb.txt",
    ] {
        let p = data_dir.join(name);
        if p.exists() {
            inputs.push(digest(&format!("alternatives:{name}"), &p)?);
        }
    }
    if config.cache.exists() {
        inputs.push(digest("score_cache", &config.cache)?);
    }
    let mut outputs = Vec::new();
    for p in b.tables.iter().chain(&b.plots).chain(std::iter::once(&b.summary)) {
        let mut d = digest("output", p)?;
        d.path = p.strip_prefix(out).unwrap_or(p).display().to_string();
        outputs.push(d);
    }
    let manifest = Manifest {
        config_digest: config.digest(),
        masked_model: config.models.masked.clone(),
        autoregressive_model: config.models.autoregressive.clone(),
        seed: config.seed,
        offline: config.offline,
        counts: results
            .ingest
            .iter()
            .map(|(id, r)| DatasetCount {
                dataset_id: *id,
                items: r.items,
                scales: r.scales,
                expected_items: id.expected_items(),
                expected_scales: id.expected_scales(),
            })
            .collect(),
        inputs,
        outputs,
    };
    b.manifest = write_text(
        out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;
    Ok(b)
}
