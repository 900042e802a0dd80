use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SCALES: &[(&str, &str)] = &[
    ("big", "enormous"),
    ("good", "excellent"),
    ("warm", "hot"),
    ("cool", "cold"),
    ("pretty", "beautiful"),
    ("tired", "exhausted"),
    ("happy", "ecstatic"),
    ("small", "tiny"),
    ("old", "ancient"),
    ("hungry", "starving"),
];

// Gives each candidate a log probability from its letters, so runs are deterministic.
const BACKEND: &str = r#"import json, sys
for line in sys.stdin:
    r = json.loads(line)
    out = [{"candidate": c, "logprob": -1.0 - (sum(map(ord, c)) % 97) / 10.0, "token_count": 1} for c in r["candidates"]]
    print(json.dumps(out), flush=True)
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(concept: bool) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);

        let mut ronai = String::from("weak,strong,pos,sentence,si_rate\n");
        let mut cloze = String::from("weak,strong,cloze_proportion\n");
        for (i, (w, s)) in SCALES.iter().enumerate() {
            let _ = writeln!(ronai, "{w},{s},ADJ,The thing is {w}.,{:.2}", (i * 7 % 10) as f64 / 10.0);
            let _ = writeln!(cloze, "{w},{s},{:.2}", (i * 3 % 10) as f64 / 10.0);
        }
        fs::write(p("ronai.csv"), ronai).unwrap();
        fs::write(p("cloze.csv"), cloze).unwrap();

        let mut degen = String::from(
            "item_sentence,mean_rating,partitive,strength,mention,subjecthood,modification,sentence_length\n",
        );
        for i in 0..24 {
            let filler = " very".repeat(i % 4);
            let ctx = format!("I{filler} like some songs from list {i}.");
            let _ = writeln!(
                degen,
                "\"{ctx}\",{:.2},{},{:.1},{},{},{},{}",
                1.0 + (i * 5 % 7) as f64,
                i % 2,
                (i * 3 % 7) as f64,
                i / 3 % 2,
                u8::from(i % 5 == 0),
                u8::from(i % 3 == 0),
                ctx.split_whitespace().count()
            );
        }
        fs::write(p("degen.csv"), degen).unwrap();
        fs::write(p("backend.py"), BACKEND).unwrap();

        let mut config = format!(
            r#"seed = 7
cache = "cache/scores.jsonl"
out_dir = "out"

[data]
degen2015 = "degen.csv"
ronai2022 = "ronai.csv"
ronai2022_cloze = "cloze.csv"

[models]
backend_command = ["python3", "backend.py"]

[alternatives]
adj_cutoff = 60

[analyses]
check_counts = false
permutations = 50
concept = {concept}
"#
        );
        if concept {
            config.push_str("\n[embeddings]\npath = \"vectors.txt\"\ndimension = 3\n");
            let mut vectors = String::new();
            let words = ["all", "each", "every", "few", "half", "much", "many", "most"];
            let strong = SCALES.iter().map(|(_, s)| *s);
            for (i, w) in words.into_iter().chain(strong).enumerate() {
                let _ = writeln!(
                    vectors,
                    "{w} 1.0 {:.2} {:.2}",
                    (i % 5) as f64 / 5.0,
                    (i % 3) as f64 / 3.0
                );
            }
            fs::write(p("vectors.txt"), vectors).unwrap();
        }
        fs::write(p("run.toml"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_scalarexp"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg(self.path("run.toml"))
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn results_of(summary: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_slice(&fs::read(summary).unwrap()).unwrap();
    v["results"].clone()
}

fn has_python() -> bool {
    Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn help_lists_every_verb_and_flag() {
    let o = Command::new(env!("CARGO_BIN_EXE_scalarexp"))
        .arg("--help")
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    for word in [
        "ingest",
        "build-alts",
        "score",
        "analyze",
        "report",
        "reproduce",
        "--config",
        "--dataset",
        "--cache",
        "--offline",
        "--out",
        "--seed",
    ] {
        assert!(text.contains(word), "help lacks {word}:\n{text}");
    }
}

#[test]
fn ingest_writes_normalized_stores() {
    let ws = Workspace::new(false);
    let o = ws.run(&["ingest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("ronai2022: 10 rows read, 10 items, 10 scales"), "{text}");
    assert!(text.contains("degen2015: 24 rows read, 24 items, 1 scales"), "{text}");
    let store = fs::read_to_string(ws.path("out/ingest/ronai2022.jsonl")).unwrap();
    assert_eq!(store.lines().count(), 10);
    assert!(store.contains("enormous"));
}

#[test]
fn dataset_flag_restricts_the_run() {
    let ws = Workspace::new(false);
    let o = ws.run(&["--dataset", "degen2015", "ingest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(listing(&ws.path("out/ingest")), ["degen2015.jsonl"]);

    let o = ws.run(&["--dataset", "gotzner2018", "ingest"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gotzner2018"), "{}", stderr(&o));

    let o = ws.run(&["--dataset", "no-such-set", "ingest"]);
    assert!(!o.status.success());
}

#[test]
fn build_alts_writes_one_file_per_set() {
    let ws = Workspace::new(false);
    let o = ws.run(&["build-alts", "--out", "alts"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        listing(&ws.path("alts/alternatives")),
        ["degen2015_quant.json", "ronai2022_adj.json"]
    );
    let adj = fs::read_to_string(ws.path("alts/alternatives/ronai2022_adj.json")).unwrap();
    assert!(adj.contains("\"enormous\""));
}

#[test]
fn report_requires_saved_results() {
    let ws = Workspace::new(false);
    let o = ws.run(&["report"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run `analyze` first"), "{}", stderr(&o));
}

#[test]
fn offline_without_cache_entries_fails() {
    let ws = Workspace::new(false);
    let o = ws.run(&["--offline", "score"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cache"), "{}", stderr(&o));
}

#[test]
fn score_analyze_report_then_offline_rerun() {
    if !has_python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let ws = Workspace::new(true);
    let o = ws.run(&["score"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("scored 34 items"), "{}", stdout(&o));

    let o = ws.run(&["analyze"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ws.path("out/results.json").exists());
    let o = ws.run(&["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = results_of(&ws.path("out/summary.json"));
    assert!(ws.path("out/manifest.json").exists());

    // the backend is gone; every score must come from the cache
    fs::remove_file(ws.path("backend.py")).unwrap();
    let o = ws.run(&["--offline", "--out", "again", "analyze"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ws.run(&["--offline", "--out", "again", "report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // the config digest differs since out_dir and offline changed; the results must not
    assert_eq!(first, results_of(&ws.path("again/summary.json")));
    let tables: Vec<String> = listing(&ws.path("out"))
        .into_iter()
        .filter(|f| f.ends_with(".tsv"))
        .collect();
    assert!(tables.contains(&"correlations.tsv".to_string()));
    for table in tables {
        assert_eq!(
            fs::read(ws.path("out").join(&table)).unwrap(),
            fs::read(ws.path("again").join(&table)).unwrap(),
            "{table}"
        );
    }
}

#[test]
fn reproduce_prints_every_criterion_and_fails_on_synthetic_data() {
    if !has_python() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let ws = Workspace::new(false);
    let o = ws.run(&["reproduce", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let text = stdout(&o);
    for c in 6..=10 {
        assert!(text.contains(&format!("criterion {c}:")), "{text}");
    }
    assert!(text.contains("not computed in this run"));
    let table = fs::read_to_string(ws.path("out/reproduction.tsv")).unwrap();
    assert!(table.starts_with("criterion\tcheck\tresult\tdetail\n"));
}
