//! Shared fixtures and independent reference implementations for the
//! integration tests. Nothing here calls into the crate's numeric code.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use scalarexp::alternatives::{self, DataSnapshot};
use scalarexp::pipeline::{self, Pipeline, RunConfig, Scorers};
use scalarexp::scoring::mock::{CountingScorer, WordHashScorer};
use scalarexp::scoring::{CachedScorer, ScoreCache};
use scalarexp::{DatasetId, EmbeddingTable, PartOfSpeech, ScoringMode};

// ---------------------------------------------------------------------------
// Reference statistics: textbook formulas, normal equations, statrs tails.

pub struct RefCorrelation {
    pub rho: f64,
    pub p: f64,
}

pub fn ref_pearson(x: &[f64], y: &[f64]) -> RefCorrelation {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let (mx, my) = (sx / n, sy / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let rho = sxy / (sxx * syy).sqrt();
    let df = n - 2.0;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    RefCorrelation {
        rho,
        p: 2.0 * dist.sf(t.abs()),
    }
}

pub struct RefFit {
    /// Intercept first.
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub p: Vec<f64>,
    pub rss: f64,
    pub df: f64,
}

/// Solves `a z = b` by Gauss-Jordan elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for k in 0..n {
            a[col][k] /= d;
        }
        for k in 0..b[col].len() {
            b[col][k] /= d;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..n {
                        a[row][k] -= f * a[col][k];
                    }
                    for k in 0..b[row].len() {
                        b[row][k] -= f * b[col][k];
                    }
                }
            }
        }
    }
    b
}

/// OLS with an intercept via the normal equations.
pub fn ref_ols(columns: &[Vec<f64>], y: &[f64]) -> RefFit {
    let n = y.len();
    let mut x: Vec<Vec<f64>> = vec![vec![1.0; n]];
    x.extend(columns.iter().cloned());
    let p = x.len();
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| (0..n).map(|r| x[i][r] * x[j][r]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..p).map(|i| (0..n).map(|r| x[i][r] * y[r]).sum()).collect();
    let mut rhs: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row = vec![0.0; p + 1];
            row[i] = 1.0;
            row[p] = xty[i];
            row
        })
        .collect();
    rhs = solve(xtx, rhs);
    let beta: Vec<f64> = rhs.iter().map(|r| r[p]).collect();
    let rss: f64 = (0..n)
        .map(|r| {
            let fitted: f64 = (0..p).map(|i| beta[i] * x[i][r]).sum();
            (y[r] - fitted).powi(2)
        })
        .sum();
    let df = (n - p) as f64;
    let sigma2 = rss / df;
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let se: Vec<f64> = (0..p).map(|i| (sigma2 * rhs[i][i]).sqrt()).collect();
    let pv: Vec<f64> = (0..p).map(|i| 2.0 * dist.sf((beta[i] / se[i]).abs())).collect();
    RefFit {
        beta,
        se,
        p: pv,
        rss,
        df,
    }
}

pub fn ref_anova(full: &RefFit, reduced: &RefFit) -> (f64, f64) {
    let d1 = reduced.df - full.df;
    let f = ((reduced.rss - full.rss) / d1) / (full.rss / full.df);
    let dist = FisherSnedecor::new(d1, full.df).unwrap();
    (f, dist.sf(f))
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// A random regression instance: `k` predictors, `n` rows, linear signal
/// plus noise.
pub struct Instance {
    pub columns: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Instance {
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let beta: Vec<f64> = (0..=k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let noise = rng.random_range(0.1..3.0);
    let y = (0..n)
        .map(|r| {
            beta[0] + (0..k).map(|j| beta[j + 1] * columns[j][r]).sum::<f64>() + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    Instance { columns, y }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Synthetic end-to-end fixture.

pub const ADJ_SCALES: &[(&str, &str)] = &[
    ("big", "enormous"),
    ("good", "excellent"),
    ("warm", "hot"),
    ("cool", "cold"),
    ("pretty", "beautiful"),
    ("intelligent", "brilliant"),
    ("tired", "exhausted"),
    ("happy", "ecstatic"),
    ("small", "tiny"),
    ("old", "ancient"),
    ("hungry", "starving"),
    ("funny", "hilarious"),
    ("ugly", "hideous"),
    ("difficult", "impossible"),
    ("possible", "certain"),
    ("dark", "black"),
];

const SUBJECTS: &[&str] = &["The elephant", "The soup", "The movie", "The teacher", "The house"];

/// Deterministic pseudo-random value in [0, 1) from a label.
pub fn unit(label: &str) -> f64 {
    let d = Sha256::digest(label.as_bytes());
    u32::from_le_bytes([d[0], d[1], d[2], d[3]]) as f64 / (u32::MAX as f64 + 1.0)
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn degen_csv(n: usize) -> String {
    const NOUNS: &[&str] = &["music", "food", "people", "books", "movies", "games", "songs", "shows"];
    let mut s =
        String::from("item_sentence,mean_rating,partitive,strength,mention,subjecthood,modification,sentence_length\n");
    for i in 0..n {
        let noun = NOUNS[i % NOUNS.len()];
        let filler = " really".repeat((unit(&format!("len{i}")) * 5.0) as usize);
        let ctx = match i % 3 {
            0 => format!("I{filler} like some {noun} number {i}."),
            1 => format!("We{filler} saw some of the {noun} in room {i}."),
            _ => format!("Some {noun} from shelf {i}{filler} were gone."),
        };
        let rating = 1.0 + 6.0 * unit(&format!("rating{i}"));
        let words = ctx.split_whitespace().count();
        let _ = writeln!(
            s,
            "\"{ctx}\",{rating:.4},{},{:.3},{},{},{},{words}",
            u8::from(i % 3 == 1),
            unit(&format!("strength{i}")) * 7.0,
            u8::from(unit(&format!("mention{i}")) > 0.5),
            u8::from(i % 3 == 2),
            u8::from(unit(&format!("mod{i}")) > 0.6),
        );
    }
    s
}

fn cross_csv(id: &str, contexts_per_scale: usize, extra: &[(&str, &str, &str, &str)]) -> String {
    let mut s = String::from("weak,strong,pos,sentence,si_rate\n");
    for (i, (w, st)) in ADJ_SCALES.iter().enumerate() {
        for c in 0..contexts_per_scale {
            let subj = SUBJECTS[(i + c) % SUBJECTS.len()];
            let rate = unit(&format!("{id}{w}{c}"));
            let _ = writeln!(s, "{w},{st},ADJ,{subj} is {w}.,{rate:.4}");
        }
    }
    for (w, st, pos, ctx) in extra {
        let rate = unit(&format!("{id}{w}"));
        let _ = writeln!(s, "{w},{st},{pos},{ctx},{rate:.4}");
    }
    s
}

fn cloze_csv() -> String {
    let mut s = String::from("weak,strong,cloze_proportion\n");
    for (w, st) in ADJ_SCALES {
        let _ = writeln!(s, "{w},{st},{:.4}", unit(&format!("cloze{w}")));
    }
    s
}

/// Deterministic embeddings for every lexicon word, the quantifiers and the
/// fixture's scalemates.
pub fn embeddings(snapshot: &DataSnapshot, dim: usize) -> EmbeddingTable {
    let mut table = EmbeddingTable::new(dim, "synthetic");
    let mut words: Vec<String> = alternatives::QUANTIFIERS.iter().map(|s| s.to_string()).collect();
    for pos in [PartOfSpeech::Adj, PartOfSpeech::Adv, PartOfSpeech::Verb] {
        let tag = alternatives::penn_tag(pos).unwrap();
        words.extend(snapshot.lexicon.words_with_tag(tag).into_iter().map(String::from));
    }
    words.extend(ADJ_SCALES.iter().map(|(_, s)| s.to_string()));
    words.sort();
    words.dedup();
    for w in words {
        // A shared positive component keeps most similarities positive.
        let bytes = Sha256::digest(w.as_bytes());
        let v: Vec<f32> = (0..dim)
            .map(|d| 0.6 + f32::from(bytes[d % 32]) / 256.0 - 0.5 * (d % 2) as f32)
            .collect();
        table.insert(&w, v).unwrap();
    }
    table
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: RunConfig,
}

impl Fixture {
    /// Writes small synthetic versions of four datasets plus Cloze data.
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let p = |name: &str| dir.path().join(name);
        write(&p("degen.csv"), &degen_csv(40));
        write(&p("ronai.csv"), &cross_csv("ronai", 1, &[]));
        write(&p("cloze.csv"), &cloze_csv());
        write(
            &p("pankratz.tsv"),
            &cross_csv(
                "pankratz",
                1,
                &[
                    ("sometimes", "always", "ADV", "The director is sometimes late."),
                    ("start", "finish", "VERB", "The runner started."),
                    ("like", "love", "VERB", "She liked it."),
                ],
            )
            .replace(',', "\t"),
        );
        write(&p("vantiel.csv"), &cross_csv("vantiel", 3, &[]));
        let mut data = BTreeMap::new();
        data.insert(DatasetId::Degen2015, p("degen.csv"));
        data.insert(DatasetId::Ronai2022, p("ronai.csv"));
        data.insert(DatasetId::Ronai2022Cloze, p("cloze.csv"));
        data.insert(DatasetId::Pankratz2021, p("pankratz.tsv"));
        data.insert(DatasetId::VanTiel2016, p("vantiel.csv"));
        let mut config = RunConfig {
            data,
            cache: p("cache/scores.jsonl"),
            out_dir: p("out"),
            ..RunConfig::default()
        };
        config.analyses.check_counts = false;
        config.analyses.permutations = 200;
        // smaller sets keep mock scoring fast; tested scalemates are force-included
        config.alternatives.adj_cutoff = Some(150);
        config.alternatives.adv_cutoff = Some(150);
        config.alternatives.verb_cutoff = Some(100);
        Fixture { dir, config }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub struct MockBackends {
    pub masked: Arc<CountingScorer<WordHashScorer>>,
    pub causal: Arc<CountingScorer<WordHashScorer>>,
}

impl MockBackends {
    pub fn new(config: &RunConfig) -> Self {
        MockBackends {
            masked: Arc::new(CountingScorer::new(WordHashScorer::new(
                &config.models.masked,
                ScoringMode::MaskedSlot,
            ))),
            causal: Arc::new(CountingScorer::new(WordHashScorer::new(
                &config.models.autoregressive,
                ScoringMode::Continuation,
            ))),
        }
    }

    pub fn calls(&self) -> usize {
        self.masked.calls() + self.causal.calls()
    }

    /// Cache-wrapped scorers in front of the mock backends.
    pub fn scorers(&self, cache: &Arc<ScoreCache>) -> Scorers {
        Scorers {
            masked: Some(Arc::new(CachedScorer::new(self.masked.clone(), cache.clone()))),
            causal: Some(Arc::new(CachedScorer::new(self.causal.clone(), cache.clone()))),
        }
    }
}

/// A pipeline over the fixture's data with the given scorers.
pub fn pipeline(config: &RunConfig, scorers: Scorers) -> Pipeline {
    let (items, reports) = pipeline::load_items(config).unwrap();
    let snapshot = DataSnapshot::load(&Pipeline::data_dir(config)).unwrap();
    let emb = config.analyses.concept.then(|| embeddings(&snapshot, 16));
    let mut p = Pipeline::from_parts(config.clone(), scorers, items, snapshot, emb).unwrap();
    p.set_ingest_reports(reports);
    p
}

/// Every regular file under `dir`, relative path to bytes.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let e = e.unwrap();
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Predictor rows with `human_si = y` and covariates `x1..xk`.
pub fn rows_from(columns: &[Vec<f64>], y: &[f64]) -> Vec<scalarexp::stats::PredictorRow> {
    use scalarexp::stats::{ItemKey, PredictorRow};
    (0..y.len())
        .map(|r| PredictorRow {
            item_key: ItemKey {
                dataset_id: DatasetId::Ronai2022,
                scale: scalarexp::Scale::some_all(),
                context_hash: format!("{r}"),
            },
            human_si: y[r],
            string_surprisal: None,
            concept_surprisal: None,
            covariates: columns
                .iter()
                .enumerate()
                .map(|(j, c)| (format!("x{}", j + 1), c[r]))
                .collect(),
        })
        .collect()
}

pub fn predictor_names(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("x{j}")).collect()
}
