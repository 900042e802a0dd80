use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::ingest::DatasetId;

fn yes() -> bool {
    true
}

fn default_seed() -> u64 {
    20_221
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_cache() -> PathBuf {
    PathBuf::from("cache/scores.jsonl")
}

fn default_masked() -> String {
    "bert-base-uncased".into()
}

fn default_causal() -> String {
    "gpt2".into()
}

fn default_top_k() -> usize {
    5
}

fn default_permutations() -> usize {
    1000
}

fn default_dimension() -> usize {
    300
}

fn default_attempts() -> usize {
    3
}

fn default_qualitative() -> Vec<[String; 2]> {
    vec![["big".into(), "enormous".into()]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_masked")]
    pub masked: String,
    #[serde(default = "default_causal")]
    pub autoregressive: String,
    /// Program (and arguments) speaking the JSON-lines scoring protocol.
    /// It receives `--model <id> --mode <mode>` appended.
    #[serde(default)]
    pub backend_command: Vec<String>,
    /// Renormalize masked-slot probabilities over the quantifier set.
    #[serde(default)]
    pub renormalize_masked: bool,
    #[serde(default = "default_attempts")]
    pub retry_attempts: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            masked: default_masked(),
            autoregressive: default_causal(),
            backend_command: Vec::new(),
            renormalize_masked: false,
            retry_attempts: default_attempts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub path: PathBuf,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativesConfig {
    /// Directory holding lexicon.tsv, frequency.tsv and exclusions_*.txt.
    /// Defaults to the bundled snapshot.
    pub data_dir: Option<PathBuf>,
    pub adj_cutoff: Option<usize>,
    pub adv_cutoff: Option<usize>,
    pub verb_cutoff: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "yes")]
    pub string: bool,
    #[serde(default = "yes")]
    pub concept: bool,
    #[serde(default = "yes")]
    pub accessibility: bool,
    #[serde(default = "yes")]
    pub qualitative: bool,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_qualitative")]
    pub qualitative_scales: Vec<[String; 2]>,
    /// Shuffles for the accessibility permutation control.
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    /// Enforce the published item and scale counts at ingest.
    #[serde(default = "yes")]
    pub check_counts: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            string: true,
            concept: true,
            accessibility: true,
            qualitative: true,
            top_k: default_top_k(),
            qualitative_scales: default_qualitative(),
            permutations: default_permutations(),
            check_counts: true,
        }
    }
}

/// A full run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Datasets to analyse, in report order. Empty means every dataset
    /// listed under `[data]`.
    #[serde(default)]
    pub datasets: Vec<DatasetId>,
    /// Source file per dataset id, including `ronai2022_cloze`.
    #[serde(default)]
    pub data: BTreeMap<DatasetId, PathBuf>,
    /// Optional cross-scale stimulus file; scales not listed fall back to
    /// parsing the dataset's context sentence.
    pub stimuli: Option<PathBuf>,
    #[serde(default)]
    pub models: ModelConfig,
    pub embeddings: Option<EmbeddingConfig>,
    #[serde(default)]
    pub alternatives: AlternativesConfig,
    #[serde(default)]
    pub analyses: AnalysisConfig,
    #[serde(default = "default_cache")]
    pub cache: PathBuf,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub offline: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            datasets: Vec::new(),
            data: BTreeMap::new(),
            stimuli: None,
            models: ModelConfig::default(),
            embeddings: None,
            alternatives: AlternativesConfig::default(),
            analyses: AnalysisConfig::default(),
            cache: default_cache(),
            out_dir: default_out(),
            offline: false,
            seed: default_seed(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in self.data.values_mut() {
            fix(p);
        }
        if let Some(p) = self.stimuli.as_mut() {
            fix(p);
        }
        if let Some(e) = self.embeddings.as_mut() {
            fix(&mut e.path);
        }
        if let Some(p) = self.alternatives.data_dir.as_mut() {
            fix(p);
        }
        fix(&mut self.cache);
        fix(&mut self.out_dir);
    }

    /// Datasets to run, in report order.
    pub fn selected(&self) -> Vec<DatasetId> {
        let ids: Vec<DatasetId> = if self.datasets.is_empty() {
            self.data.keys().copied().collect()
        } else {
            self.datasets.clone()
        };
        let mut order = vec![DatasetId::Degen2015];
        order.extend(DatasetId::CROSS_SCALE);
        order.into_iter().filter(|id| ids.contains(id)).collect()
    }

    /// Every enabled analysis has what it needs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let missing = |what: String| Err(PipelineError::Config(what));
        for id in self.selected() {
            if !self.data.contains_key(&id) {
                return missing(format!("dataset {id} selected but [data].{id} is not set"));
            }
        }
        if self.analyses.concept && self.embeddings.is_none() {
            return missing("concept analysis enabled but [embeddings] is not configured".into());
        }
        if self.analyses.accessibility
            && self.selected().contains(&DatasetId::Ronai2022)
            && !self.data.contains_key(&DatasetId::Ronai2022Cloze)
        {
            return missing("accessibility analysis enabled but [data].ronai2022_cloze is not set".into());
        }
        if self.analyses.top_k == 0 {
            return missing("analyses.top_k must be at least 1".into());
        }
        if !self.offline && self.models.backend_command.is_empty() {
            return missing("no scoring backend: set models.backend_command or run offline from a cache".into());
        }
        Ok(())
    }

    /// Digest of the canonical serialization.
    pub fn digest(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            offline = true
            [data]
            ronai2022 = "r.csv"
            degen2015 = "d.csv"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.selected(), [DatasetId::Degen2015, DatasetId::Ronai2022]);
        assert_eq!(cfg.models.autoregressive, "gpt2");
        assert_eq!(cfg.analyses.permutations, 1000);
        // concept enabled without embeddings
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "[data]\nronai2022 = \"r.csv\"\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.data[&DatasetId::Ronai2022], dir.path().join("r.csv"));
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(RunConfig::default().digest(), RunConfig::default().digest());
        let other = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(RunConfig::default().digest(), other.digest());
    }
}
