//! End-to-end run and the ablation table.

use std::fmt::Write as _;
use std::path::Path;

use attrflow_core::corpus::AttributeSchema;
use attrflow_core::cvae::TrainConfig;
use attrflow_core::eval::{version_string, MetricsReport};
use attrflow_core::sampler::EnergySpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Layout, RunConfig, Thresholds};
use crate::error::{CliError, StageContext};
use crate::manifest::Manifest;
use crate::stages::{self, all_specs, CorpusFiles, SampleInputs, SPLIT_A_FILE};

/// Config echo stored in reports. The output root is left out so that runs
/// in different directories produce identical reports.
pub fn config_echo(cfg: &RunConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Value::Object(m) = &mut v {
        m.remove("output_root");
    }
    v
}

fn corpus_stage(cfg: &RunConfig, schema: &AttributeSchema, layout: &Layout) -> Result<(), CliError> {
    let topics = cfg.load_topics()?;
    stages::gen_corpus_stage(
        schema,
        &topics,
        cfg.corpus.seed,
        cfg.corpus.counts(),
        cfg.corpus.vocab_max,
        &layout.corpus,
    )
    .stage("gen-corpus")?;
    Ok(())
}

/// Trains a CVAE and its latent classifiers into `ckpt_dir`.
fn model_stages(
    train: &TrainConfig,
    cfg: &RunConfig,
    schema: &AttributeSchema,
    layout: &Layout,
    cvae: &Path,
    latent_dir: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<(), CliError> {
    let loss_log = cvae.with_file_name("loss_log.csv");
    stages::train_cvae_stage(schema, &layout.train_jsonl(), &layout.vocab(), train, cvae, &loss_log, |r| {
        log(&format!(
            "epoch {:>3}  recon {:.4}  kl {:.4}  lc {:.4}  ld {:.4}",
            r.epoch, r.recon, r.kl, r.lc, r.ld
        ))
    })
    .stage("train")?;
    let acc = stages::train_latent_stage(
        schema,
        cvae,
        &layout.train_jsonl(),
        &layout.vocab(),
        &cfg.latent_classifiers,
        latent_dir,
    )
    .stage("train-latent-classifiers")?;
    log(&format!("latent classifier held-out accuracy {acc:.3?}"));
    Ok(())
}

fn eval_classifier_stage(cfg: &RunConfig, schema: &AttributeSchema, layout: &Layout, log: &mut dyn FnMut(&str)) -> Result<(), CliError> {
    let acc = stages::train_eval_stage(
        schema,
        &layout.train_jsonl(),
        &layout.vocab(),
        &layout.latent_dir().join(SPLIT_A_FILE),
        &cfg.eval_classifiers,
        &layout.eval_dir(),
    )
    .stage("train-eval-classifiers")?;
    log(&format!("eval classifier held-out accuracy {acc:.3?}"));
    Ok(())
}

/// Samples every spec in `specs` from the given model and scores the result.
#[allow(clippy::too_many_arguments)]
fn sample_and_eval(
    cfg: &RunConfig,
    schema: &AttributeSchema,
    layout: &Layout,
    cvae: &Path,
    latent_dir: &Path,
    specs: &[EnergySpec],
    samples_out: &Path,
    report_out: &Path,
) -> Result<MetricsReport, CliError> {
    let inputs = SampleInputs {
        cvae,
        classifiers: latent_dir,
        vocab: &layout.vocab(),
        contexts: &layout.test_jsonl(),
        max_contexts: cfg.sampling.max_contexts,
    };
    stages::sample_stage(
        schema,
        &inputs,
        specs,
        &cfg.solver,
        cfg.sampling.seed,
        cfg.sampling.workers,
        samples_out,
    )
    .stage("sample")?;
    stages::eval_stage(
        schema,
        samples_out,
        &layout.test_jsonl(),
        &layout.eval_dir(),
        &layout.vocab(),
        cfg.eval.seed,
        config_echo(cfg),
        report_out,
    )
    .stage("eval")
}

/// Failed threshold descriptions; empty when the report passes.
pub fn check_thresholds(report: &MetricsReport, t: &Thresholds) -> Vec<String> {
    let mut out = Vec::new();
    if report.average_accuracy < t.min_mean_accuracy {
        out.push(format!(
            "mean accuracy {:.4} < {:.4}",
            report.average_accuracy, t.min_mean_accuracy
        ));
    }
    for a in &report.accuracy {
        if let Some(v) = a.accuracy {
            if v < t.min_attribute_accuracy {
                out.push(format!("{} accuracy {v:.4} < {:.4}", a.attribute, t.min_attribute_accuracy));
            }
        }
    }
    out
}

pub struct PipelineOutcome {
    pub report: MetricsReport,
    pub manifest: Manifest,
    pub threshold_failures: Vec<String>,
}

/// gen-corpus → train → latent classifiers → eval classifiers → sample all
/// combinations → eval → manifest.
pub fn run_pipeline(cfg: &RunConfig, log: &mut dyn FnMut(&str)) -> Result<PipelineOutcome, CliError> {
    let schema = cfg.validate()?;
    let layout = cfg.layout();
    log(&format!("output root {}", layout.root.display()));
    corpus_stage(cfg, &schema, &layout)?;
    model_stages(&cfg.train, cfg, &schema, &layout, &layout.cvae(), &layout.latent_dir(), log)?;
    eval_classifier_stage(cfg, &schema, &layout, log)?;
    let report = sample_and_eval(
        cfg,
        &schema,
        &layout,
        &layout.cvae(),
        &layout.latent_dir(),
        &all_specs(&schema, cfg.sampling.lambda),
        &layout.controlled_samples(),
        &layout.report(),
    )?;
    log(&format!("average accuracy {:.4}", report.average_accuracy));
    let manifest = Manifest::build(&layout.root, version_string()).stage("manifest")?;
    manifest.save(&layout.manifest()).stage("manifest")?;
    let threshold_failures = cfg
        .acceptance
        .as_ref()
        .map(|t| check_thresholds(&report, t))
        .unwrap_or_default();
    Ok(PipelineOutcome {
        report,
        manifest,
        threshold_failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoEbm,
    NoLc,
    NoLd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoEbm, Variant::NoLc, Variant::NoLd];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::NoEbm => "w/o EBM",
            Variant::NoLc => "w/o L_C",
            Variant::NoLd => "w/o L_D",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoEbm => "no-ebm",
            Variant::NoLc => "no-lc",
            Variant::NoLd => "no-ld",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.key() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: String,
    pub accuracy: Vec<Option<f64>>,
    pub average: f64,
    pub bleu: f64,
    pub distinct_2: f64,
    pub self_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationReport {
    pub version: String,
    pub attributes: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Variant |");
        for a in &self.attributes {
            write!(s, " {a} |").unwrap();
        }
        s.push_str(" Avg | BLEU | Dist-2 | Self-BLEU |\n|---|");
        s.push_str(&"---:|".repeat(self.attributes.len() + 4));
        s.push('\n');
        for r in &self.rows {
            write!(s, "| {} |", r.label).unwrap();
            for a in &r.accuracy {
                match a {
                    Some(v) => write!(s, " {:.2} |", 100.0 * v).unwrap(),
                    None => s.push_str(" - |"),
                }
            }
            writeln!(
                s,
                " {:.2} | {:.2} | {:.2} | {:.2} |",
                100.0 * r.average,
                100.0 * r.bleu,
                100.0 * r.distinct_2,
                100.0 * r.self_bleu
            )
            .unwrap();
        }
        s
    }
}

fn row(v: Variant, report: &MetricsReport) -> AblationRow {
    AblationRow {
        variant: v,
        label: v.label().into(),
        accuracy: report.accuracy.iter().map(|a| a.accuracy).collect(),
        average: report.average_accuracy,
        bleu: report.bleu.mean,
        distinct_2: report.distinct.distinct_2.corpus,
        self_bleu: report.self_bleu,
    }
}

/// Builds any missing shared artifacts (corpus, full model, eval
/// classifiers), then scores each variant on the same contexts and starts.
pub fn run_ablation(cfg: &RunConfig, variants: &[Variant], log: &mut dyn FnMut(&str)) -> Result<AblationReport, CliError> {
    let schema = cfg.validate()?;
    let layout = cfg.layout();
    let c = CorpusFiles::in_dir(&layout.corpus);
    if ![&c.train, &c.test, &c.vocab].iter().all(|p| p.exists()) {
        log("building corpus");
        corpus_stage(cfg, &schema, &layout)?;
    }
    if !layout.cvae().exists() || !layout.latent_dir().join(SPLIT_A_FILE).exists() {
        log("training full model");
        model_stages(&cfg.train, cfg, &schema, &layout, &layout.cvae(), &layout.latent_dir(), log)?;
    }
    if !layout.eval_dir().exists() {
        eval_classifier_stage(cfg, &schema, &layout, log)?;
    }
    let lambda = cfg.sampling.lambda;
    let mut rows = Vec::new();
    for &v in variants {
        log(&format!("variant {}", v.label()));
        let (cvae, latent, weight) = match v {
            Variant::Full => (layout.cvae(), layout.latent_dir(), lambda),
            Variant::NoEbm => (layout.cvae(), layout.latent_dir(), 0.0),
            Variant::NoLc | Variant::NoLd => {
                let dir = layout.checkpoints.join("ablation").join(v.key());
                let mut train = cfg.train.clone();
                if v == Variant::NoLc {
                    train.lc_weight = 0.0;
                } else {
                    train.ld_weight = 0.0;
                }
                let (cvae, latent) = (dir.join("cvae.ckpt"), dir.join("latent"));
                model_stages(&train, cfg, &schema, &layout, &cvae, &latent, log)?;
                (cvae, latent, lambda)
            }
        };
        let report = sample_and_eval(
            cfg,
            &schema,
            &layout,
            &cvae,
            &latent,
            &all_specs(&schema, weight),
            &layout.samples.join("ablation").join(format!("{}.jsonl", v.key())),
            &layout.reports.join("ablation").join(format!("{}.json", v.key())),
        )?;
        log(&format!("{}: average accuracy {:.4}", v.label(), report.average_accuracy));
        rows.push(row(v, &report));
    }
    let out = AblationReport {
        version: version_string(),
        attributes: schema.attributes.iter().map(|a| a.name.clone()).collect(),
        rows,
    };
    stages::write_json(&layout.reports.join("ablation.json"), &out).stage("ablate")?;
    attrflow_core::checkpoint::write_atomic(&layout.reports.join("ablation.md"), out.to_markdown().as_bytes())
        .stage("ablate")?;
    Ok(out)
}
