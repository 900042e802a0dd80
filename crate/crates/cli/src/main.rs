use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use scalarexp::alternatives::DataSnapshot;
use scalarexp::ingest::{self, DatasetId};
use scalarexp::pipeline::{self, report, reproduce, Pipeline, RunConfig, RunResults, Scorers};
use scalarexp::templates;

/// Scalar-inference predictors from language-model surprisal.
#[derive(Debug, Parser)]
#[command(name = "scalarexp", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Restrict the run to this dataset. Repeatable.
    #[arg(long = "dataset", global = true, value_name = "ID")]
    datasets: Vec<DatasetId>,
    /// Score cache file.
    #[arg(long, global = true, value_name = "PATH")]
    cache: Option<PathBuf>,
    /// Serve scores from the cache only.
    #[arg(long, global = true)]
    offline: bool,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the permutation control.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and normalize the raw datasets.
    Ingest,
    /// Build the alternative sets each dataset uses.
    BuildAlts,
    /// Score every construction and fill the cache.
    Score,
    /// Run the analyses and save the results.
    Analyze,
    /// Write tables, plots and the manifest from saved results.
    Report,
    /// Run end to end and compare against the reference results.
    Reproduce,
}

const RESULTS_FILE: &str = "results.json";

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !common.datasets.is_empty() {
        let mut ids = common.datasets.clone();
        if ids.contains(&DatasetId::Ronai2022) && cfg.data.contains_key(&DatasetId::Ronai2022Cloze) {
            ids.push(DatasetId::Ronai2022Cloze);
        }
        for id in &ids {
            if !cfg.data.contains_key(id) {
                bail!("dataset {id} has no file under [data] in the config");
            }
        }
        cfg.datasets = ids;
    }
    if let Some(c) = &common.cache {
        cfg.cache = c.clone();
    }
    if common.offline {
        cfg.offline = true;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if cfg.selected().is_empty() {
        bail!("no datasets selected; list files under [data] in the config");
    }
    Ok(cfg)
}

/// A pipeline that never scores, for the verbs that only need inputs.
fn unscored_pipeline(cfg: &RunConfig) -> Result<Pipeline> {
    let (items, _) = pipeline::load_items(cfg)?;
    let snapshot = DataSnapshot::load(&Pipeline::data_dir(cfg))?;
    let mut p = Pipeline::from_parts(cfg.clone(), Scorers::default(), items, snapshot, None)?;
    if let Some(path) = &cfg.stimuli {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        p.set_stimuli(templates::read_stimuli(BufReader::new(f))?);
    }
    Ok(p)
}

fn scored_pipeline(cfg: &RunConfig) -> Result<Pipeline> {
    let (scorers, cache) = Scorers::from_config(cfg)?;
    if cache.discarded() > 0 {
        log::warn!(
            "discarded {} corrupt cache lines in {}",
            cache.discarded(),
            cache.path().display()
        );
    }
    info!("score cache {} holds {} entries", cache.path().display(), cache.len());
    Ok(Pipeline::new(cfg.clone(), scorers)?)
}

fn ingest(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.out_dir.join("ingest");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let (items, reports) = pipeline::load_items(cfg)?;
    for (id, report) in &reports {
        let path = dir.join(format!("{id}.jsonl"));
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        ingest::write_store(&items[id], &mut w)?;
        w.flush()?;
        println!(
            "{id}: {} rows read, {} items, {} scales, {} out of bounds, {} multi-word rows dropped -> {}",
            report.rows_read,
            report.items,
            report.scales,
            report.rejected_out_of_bounds,
            report.dropped_multi_word_rows,
            path.display()
        );
    }
    Ok(())
}

fn build_alts(cfg: &RunConfig) -> Result<()> {
    let p = unscored_pipeline(cfg)?;
    let sets = p.build_alternatives()?;
    let dir = cfg.out_dir.join("alternatives");
    let written = report::write_alternatives(&dir, &sets)?;
    for ((id, set), path) in sets.iter().zip(&written) {
        println!(
            "{id} {}: {} members ({} force-included) -> {}",
            set.pos,
            set.len(),
            set.provenance.force_included.len(),
            path.display()
        );
    }
    Ok(())
}

fn save_results(dir: &Path, results: &RunResults) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(RESULTS_FILE);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), results)?;
    Ok(path)
}

fn load_results(dir: &Path) -> Result<RunResults> {
    let path = dir.join(RESULTS_FILE);
    let f = File::open(&path).with_context(|| format!("opening {}; run `analyze` first", path.display()))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

fn print_notices(results: &RunResults) {
    let within = results.within.iter().flat_map(|w| w.notices.iter());
    let cross = results.cross.iter().flat_map(|s| s.notices.iter());
    for n in results.notices.iter().chain(within).chain(cross) {
        println!("note: {n}");
    }
}

fn write_report(cfg: &RunConfig, results: &RunResults) -> Result<()> {
    let bundle = report::write_report(cfg, results, &cfg.out_dir)?;
    println!(
        "wrote {} tables and {} plots to {}",
        bundle.tables.len(),
        bundle.plots.len(),
        bundle.dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Ingest => ingest(&cfg)?,
        Command::BuildAlts => build_alts(&cfg)?,
        Command::Score => {
            let n = scored_pipeline(&cfg)?.score_only()?;
            println!("scored {n} items; cache at {}", cfg.cache.display());
        }
        Command::Analyze => {
            let results = scored_pipeline(&cfg)?.run()?;
            print_notices(&results);
            let path = save_results(&cfg.out_dir, &results)?;
            println!("results -> {}", path.display());
        }
        Command::Report => {
            let results = load_results(&cfg.out_dir)?;
            write_report(&cfg, &results)?;
        }
        Command::Reproduce => {
            let results = scored_pipeline(&cfg)?.run()?;
            print_notices(&results);
            save_results(&cfg.out_dir, &results)?;
            write_report(&cfg, &results)?;
            let checks = reproduce::evaluate(&results);
            let path = cfg.out_dir.join("reproduction.tsv");
            fs::write(&path, reproduce::to_tsv(&checks)).with_context(|| format!("writing {}", path.display()))?;
            for c in &checks {
                println!(
                    "[{}] criterion {}: {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.criterion,
                    c.name,
                    c.detail
                );
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

/// The error chain with causes dropped when their text is already shown.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
