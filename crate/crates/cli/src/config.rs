//! Run configuration: one JSON document drives every stage.

use std::path::{Path, PathBuf};

use attrflow_core::attribute_space::LatentClassifierConfig;
use attrflow_core::corpus::{builtin_topics, AttributeSchema, CorpusCounts};
use attrflow_core::cvae::TrainConfig;
use attrflow_core::eval::EvalClassifierConfig;
use attrflow_core::sampler::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Overrides `output_root`; the only environment variable consulted.
pub const OUTPUT_ROOT_ENV: &str = "ATTRFLOW_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub samples: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus".into(),
            checkpoints: "checkpoints".into(),
            samples: "samples".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub train_per_aspect: usize,
    pub test_total: usize,
    pub vocab_max: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let c = CorpusCounts::default();
        CorpusConfig {
            seed: 7,
            train_per_aspect: c.train_per_aspect,
            test_total: c.test_total,
            vocab_max: 5000,
        }
    }
}

impl CorpusConfig {
    pub fn counts(&self) -> CorpusCounts {
        CorpusCounts {
            train_per_aspect: self.train_per_aspect,
            test_total: self.test_total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Weight of every energy term.
    pub lambda: f64,
    pub seed: u64,
    /// Use only the first `n` test contexts; all when absent.
    pub max_contexts: Option<usize>,
    pub workers: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            lambda: 1.0,
            seed: 0,
            max_contexts: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct EvalConfig {
    /// Seeds the self-BLEU subsample.
    pub seed: u64,
}


/// Pipeline exit status 4 when the report misses these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub min_mean_accuracy: f64,
    pub min_attribute_accuracy: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_mean_accuracy: 0.85,
            min_attribute_accuracy: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_root: PathBuf,
    pub paths: Paths,
    /// Built-in schema when absent.
    pub schema: Option<PathBuf>,
    /// Built-in topics when absent; one topic per line.
    pub topics: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub latent_classifiers: LatentClassifierConfig,
    pub eval_classifiers: EvalClassifierConfig,
    pub solver: SolverConfig,
    pub sampling: SamplingConfig,
    pub eval: EvalConfig,
    pub acceptance: Option<Thresholds>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_root: "runs/default".into(),
            paths: Paths::default(),
            schema: None,
            topics: None,
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            latent_classifiers: LatentClassifierConfig::default(),
            eval_classifiers: EvalClassifierConfig::default(),
            solver: SolverConfig::default(),
            sampling: SamplingConfig::default(),
            eval: EvalConfig::default(),
            acceptance: Some(Thresholds::default()),
        }
    }
}

/// Absolute locations of every artifact a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub samples: PathBuf,
    pub reports: PathBuf,
}

impl Layout {
    pub fn train_jsonl(&self) -> PathBuf {
        self.corpus.join("train.jsonl")
    }
    pub fn test_jsonl(&self) -> PathBuf {
        self.corpus.join("test.jsonl")
    }
    pub fn vocab(&self) -> PathBuf {
        self.corpus.join("vocab.json")
    }
    pub fn cvae(&self) -> PathBuf {
        self.checkpoints.join("cvae.ckpt")
    }
    pub fn loss_log(&self) -> PathBuf {
        self.checkpoints.join("loss_log.csv")
    }
    pub fn latent_dir(&self) -> PathBuf {
        self.checkpoints.join("latent")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.checkpoints.join("eval")
    }
    pub fn controlled_samples(&self) -> PathBuf {
        self.samples.join("controlled.jsonl")
    }
    pub fn report(&self) -> PathBuf {
        self.reports.join("report.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

impl RunConfig {
    /// Reads a config; relative paths inside it resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_root = base.join(&cfg.output_root);
        cfg.schema = cfg.schema.map(|p| base.join(p));
        cfg.topics = cfg.topics.map(|p| base.join(p));
        Ok(cfg)
    }

    /// Applies the output-root environment override.
    pub fn with_env(mut self) -> Self {
        if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
            self.output_root = root.into();
        }
        self
    }

    pub fn layout(&self) -> Layout {
        let r = &self.output_root;
        Layout {
            root: r.clone(),
            corpus: r.join(&self.paths.corpus),
            checkpoints: r.join(&self.paths.checkpoints),
            samples: r.join(&self.paths.samples),
            reports: r.join(&self.paths.reports),
        }
    }

    pub fn load_schema(&self) -> Result<AttributeSchema, CliError> {
        match &self.schema {
            None => Ok(AttributeSchema::default()),
            Some(p) => AttributeSchema::load(p)
                .map_err(|e| CliError::Validation(format!("schema {}: {e}", p.display()))),
        }
    }

    pub fn load_topics(&self) -> Result<Vec<String>, CliError> {
        match &self.topics {
            None => Ok(builtin_topics()),
            Some(p) => read_topics(p),
        }
    }

    /// Checks everything that can be checked without doing work. Nothing
    /// is written.
    pub fn validate(&self) -> Result<AttributeSchema, CliError> {
        let schema = self.load_schema()?;
        self.load_topics()?;
        let bad = |m: String| Err(CliError::Validation(m));
        if self.corpus.train_per_aspect == 0 || self.corpus.test_total == 0 {
            return bad("corpus counts must be positive".into());
        }
        if self.corpus.vocab_max < 5 {
            return bad("vocab_max must leave room for at least one word".into());
        }
        self.train
            .validate(schema.len())
            .map_err(|e| CliError::Validation(format!("train: {e}")))?;
        self.latent_classifiers
            .validate()
            .map_err(|e| CliError::Validation(format!("latent_classifiers: {e}")))?;
        self.solver
            .validate()
            .map_err(|e| CliError::Validation(format!("solver: {e}")))?;
        let ec = &self.eval_classifiers;
        if ec.epochs == 0 || ec.batch_size == 0 || !(ec.lr > 0.0) || !(0.0..1.0).contains(&ec.holdout_fraction) {
            return bad("eval_classifiers: invalid settings".into());
        }
        if !(self.sampling.lambda.is_finite() && self.sampling.lambda >= 0.0) {
            return bad("sampling.lambda must be finite and non-negative".into());
        }
        if self.sampling.workers == 0 || self.sampling.max_contexts == Some(0) {
            return bad("sampling.workers and sampling.max_contexts must be positive".into());
        }
        if let Some(t) = &self.acceptance {
            if !(0.0..=1.0).contains(&t.min_mean_accuracy) || !(0.0..=1.0).contains(&t.min_attribute_accuracy) {
                return bad("acceptance thresholds must lie in [0, 1]".into());
            }
        }
        Ok(schema)
    }
}

pub fn read_topics(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read topics {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"train": {"epochz": 3}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(CliError::Validation(_))));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"output_root": "out", "schema": "s.json"}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.output_root, dir.path().join("out"));
        assert_eq!(cfg.schema, Some(dir.path().join("s.json")));
        assert!(matches!(cfg.validate(), Err(CliError::Validation(_))));
    }

    #[test]
    fn bad_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.train.batch_size = 64;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.sampling.workers = 0;
        assert!(cfg.validate().is_err());
    }
}
