//! Command-line surface. Flags override the values from `--config`.

use std::path::{Path, PathBuf};

use attrflow_core::checkpoint::FORMAT_VERSION;
use attrflow_core::corpus::{AttributeSchema, CorpusCounts};
use attrflow_core::eval::{version_string, REPORT_VERSION};
use attrflow_core::sampler::{DriftKind, EnergySpec, Integrator};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::{CliError, StageContext, EXIT_ACCEPTANCE, EXIT_OK};
use crate::pipeline::{config_echo, run_ablation, run_pipeline, Variant};
use crate::stages::{self, all_specs, SampleInputs, SPLIT_A_FILE};

#[derive(Debug, Parser)]
#[command(name = "attrflow", about = "Attribute-controlled dialogue generation in a CVAE latent space", disable_version_flag = true)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Print the version and artifact compatibility matrix.
    #[arg(short = 'V', long)]
    pub version: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus and vocabulary.
    GenCorpus(GenCorpusArgs),
    /// Train the CVAE.
    Train(TrainArgs),
    /// Train one latent classifier per attribute on split A.
    TrainLatentClassifiers(LatentArgs),
    /// Train the bag-of-words evaluation classifiers on split B.
    TrainEvalClassifiers(EvalClassifierArgs),
    /// Controlled sampling through the latent ODE.
    Sample(SampleArgs),
    /// Score a samples file.
    Eval(EvalArgs),
    /// Compare the full system against its ablations.
    Ablate(AblateArgs),
    /// Run every stage and write a manifest.
    Pipeline,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_per_aspect: Option<usize>,
    #[arg(long)]
    pub test_total: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV; next to the checkpoint by default.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LatentArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalClassifierArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Split-A id record written by train-latent-classifiers.
    #[arg(long)]
    pub split_a: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DriftArg {
    Reduced,
    Full,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub classifiers: Option<PathBuf>,
    /// Defaults to vocab.json next to the contexts file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Target aspects, e.g. "style=lyrical,mind=critical". Empty for
    /// uncontrolled sampling.
    #[arg(long, conflicts_with = "all_combinations")]
    pub attrs: Option<String>,
    /// Sample every aspect combination.
    #[arg(long)]
    pub all_combinations: bool,
    #[arg(long = "lambda")]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub integrator: Option<IntegratorArg>,
    #[arg(long, value_enum)]
    pub drift: Option<DriftArg>,
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    #[arg(long)]
    pub max_contexts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Directory of evaluation classifiers.
    #[arg(long)]
    pub classifiers: Option<PathBuf>,
    /// Defaults to vocab.json next to the refs file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Comma-separated subset of full,no-ebm,no-lc,no-ld.
    #[arg(long, default_value = "full,no-ebm,no-lc,no-ld")]
    pub variants: String,
}

pub fn version_text() -> String {
    format!(
        "attrflow {}\n\
         artifact                 written  readable\n\
         checkpoint format_version  {FORMAT_VERSION}        {FORMAT_VERSION}\n\
         report_version             {REPORT_VERSION}        {REPORT_VERSION}\n",
        version_string()
    )
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(cfg.with_env())
}

fn sibling_vocab(file: &Path) -> PathBuf {
    file.with_file_name("vocab.json")
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} {} not found", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} {} not found", path.display())))
    }
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    if cli.version {
        print!("{}", version_text());
        return Ok(EXIT_OK);
    }
    let Some(command) = cli.command else {
        return Err(CliError::Validation("no subcommand given; see --help".into()));
    };
    let mut cfg = load_config(cli.config.as_deref())?;
    let layout = cfg.layout();
    match command {
        Command::GenCorpus(a) => {
            if let Some(p) = a.schema {
                cfg.schema = Some(p);
            }
            if let Some(p) = a.topics {
                cfg.topics = Some(p);
            }
            cfg.corpus.seed = a.seed.unwrap_or(cfg.corpus.seed);
            cfg.corpus.train_per_aspect = a.train_per_aspect.unwrap_or(cfg.corpus.train_per_aspect);
            cfg.corpus.test_total = a.test_total.unwrap_or(cfg.corpus.test_total);
            let schema = cfg.validate()?;
            let topics = cfg.load_topics()?;
            let out = a.out.unwrap_or(layout.corpus);
            let counts = CorpusCounts {
                train_per_aspect: cfg.corpus.train_per_aspect,
                test_total: cfg.corpus.test_total,
            };
            let files = stages::gen_corpus_stage(&schema, &topics, cfg.corpus.seed, counts, cfg.corpus.vocab_max, &out)
                .stage("gen-corpus")?;
            log(&format!("wrote {} and {}", files.train.display(), files.test.display()));
        }
        Command::Train(a) => {
            cfg.train.epochs = a.epochs.unwrap_or(cfg.train.epochs);
            cfg.train.lr = a.lr.unwrap_or(cfg.train.lr);
            cfg.train.latent_dim = a.latent_dim.unwrap_or(cfg.train.latent_dim);
            cfg.train.seed = a.seed.unwrap_or(cfg.train.seed);
            let schema = cfg.validate()?;
            let train = a.train.unwrap_or(layout.train_jsonl());
            let vocab = a.vocab.unwrap_or_else(|| sibling_vocab(&train));
            require_file(&train, "training file")?;
            require_file(&vocab, "vocabulary")?;
            let out = a.out.unwrap_or(layout.cvae());
            let loss_log = a.log.unwrap_or_else(|| out.with_file_name("loss_log.csv"));
            stages::train_cvae_stage(&schema, &train, &vocab, &cfg.train, &out, &loss_log, |r| {
                log(&format!(
                    "epoch {:>3}  recon {:.4}  kl {:.4}  lc {:.4}  ld {:.4}",
                    r.epoch, r.recon, r.kl, r.lc, r.ld
                ))
            })
            .stage("train")?;
            log(&format!("wrote {}", out.display()));
        }
        Command::TrainLatentClassifiers(a) => {
            cfg.latent_classifiers.epochs = a.epochs.unwrap_or(cfg.latent_classifiers.epochs);
            cfg.latent_classifiers.seed = a.seed.unwrap_or(cfg.latent_classifiers.seed);
            let schema = cfg.validate()?;
            let ckpt = a.ckpt.unwrap_or(layout.cvae());
            let train = a.train.unwrap_or(layout.train_jsonl());
            let vocab = a.vocab.unwrap_or_else(|| sibling_vocab(&train));
            for (p, w) in [(&ckpt, "checkpoint"), (&train, "training file"), (&vocab, "vocabulary")] {
                require_file(p, w)?;
            }
            let out = a.out.unwrap_or(layout.latent_dir());
            let acc = stages::train_latent_stage(&schema, &ckpt, &train, &vocab, &cfg.latent_classifiers, &out)
                .stage("train-latent-classifiers")?;
            log(&format!("held-out accuracy {acc:.3?}"));
        }
        Command::TrainEvalClassifiers(a) => {
            cfg.eval_classifiers.epochs = a.epochs.unwrap_or(cfg.eval_classifiers.epochs);
            cfg.eval_classifiers.seed = a.seed.unwrap_or(cfg.eval_classifiers.seed);
            let schema = cfg.validate()?;
            let train = a.train.unwrap_or(layout.train_jsonl());
            let vocab = a.vocab.unwrap_or_else(|| sibling_vocab(&train));
            let split_a = a.split_a.unwrap_or(layout.latent_dir().join(SPLIT_A_FILE));
            for (p, w) in [(&train, "training file"), (&vocab, "vocabulary"), (&split_a, "split-A record")] {
                require_file(p, w)?;
            }
            let out = a.out.unwrap_or(layout.eval_dir());
            let acc = stages::train_eval_stage(&schema, &train, &vocab, &split_a, &cfg.eval_classifiers, &out)
                .stage("train-eval-classifiers")?;
            log(&format!("held-out accuracy {acc:.3?}"));
        }
        Command::Sample(a) => {
            let s = &mut cfg.sampling;
            s.lambda = a.lambda.unwrap_or(s.lambda);
            s.seed = a.seed.unwrap_or(s.seed);
            s.workers = a.workers.unwrap_or(s.workers);
            s.max_contexts = a.max_contexts.or(s.max_contexts);
            cfg.solver.steps = a.steps.unwrap_or(cfg.solver.steps);
            if let Some(i) = a.integrator {
                cfg.solver.integrator = match i {
                    IntegratorArg::Euler => Integrator::Euler,
                    IntegratorArg::Rk4 => Integrator::Rk4,
                };
            }
            if let Some(d) = a.drift {
                cfg.solver.drift = match d {
                    DriftArg::Reduced => DriftKind::Reduced,
                    DriftArg::Full => DriftKind::Full,
                };
            }
            let schema = cfg.validate()?;
            let specs = specs_for(&schema, a.attrs.as_deref(), a.all_combinations, cfg.sampling.lambda)?;
            let ckpt = a.ckpt.unwrap_or(layout.cvae());
            let classifiers = a.classifiers.unwrap_or(layout.latent_dir());
            let contexts = a.contexts.unwrap_or(layout.test_jsonl());
            let vocab = a.vocab.unwrap_or_else(|| sibling_vocab(&contexts));
            for (p, w) in [(&ckpt, "checkpoint"), (&contexts, "contexts file"), (&vocab, "vocabulary")] {
                require_file(p, w)?;
            }
            require_dir(&classifiers, "classifier directory")?;
            let out = a.out.unwrap_or(layout.controlled_samples());
            let inputs = SampleInputs {
                cvae: &ckpt,
                classifiers: &classifiers,
                vocab: &vocab,
                contexts: &contexts,
                max_contexts: cfg.sampling.max_contexts,
            };
            let records = stages::sample_stage(
                &schema,
                &inputs,
                &specs,
                &cfg.solver,
                cfg.sampling.seed,
                cfg.sampling.workers,
                &out,
            )
            .stage("sample")?;
            log(&format!("wrote {} samples to {}", records.len(), out.display()));
        }
        Command::Eval(a) => {
            cfg.eval.seed = a.seed.unwrap_or(cfg.eval.seed);
            let schema = cfg.validate()?;
            let responses = a.responses.unwrap_or(layout.controlled_samples());
            let refs = a.refs.unwrap_or(layout.test_jsonl());
            let vocab = a.vocab.unwrap_or_else(|| sibling_vocab(&refs));
            let classifiers = a.classifiers.unwrap_or(layout.eval_dir());
            for (p, w) in [(&responses, "responses file"), (&refs, "references file"), (&vocab, "vocabulary")] {
                require_file(p, w)?;
            }
            require_dir(&classifiers, "classifier directory")?;
            let report_path = a.report.unwrap_or(layout.report());
            let report = stages::eval_stage(
                &schema,
                &responses,
                &refs,
                &classifiers,
                &vocab,
                cfg.eval.seed,
                config_echo(&cfg),
                &report_path,
            )
            .stage("eval")?;
            println!("average accuracy {:.4}", report.average_accuracy);
            for acc in &report.accuracy {
                println!("{} {}", acc.attribute, acc.accuracy.map_or("-".into(), |v| format!("{v:.4}")));
            }
        }
        Command::Ablate(a) => {
            let variants = a
                .variants
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Variant::parse(s).ok_or_else(|| CliError::Validation(format!("unknown variant {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if variants.is_empty() {
                return Err(CliError::Validation("no ablation variants selected".into()));
            }
            let report = run_ablation(&cfg, &variants, &mut log)?;
            print!("{}", report.to_markdown());
        }
        Command::Pipeline => {
            let out = run_pipeline(&cfg, &mut log)?;
            println!("manifest {} files", out.manifest.files.len());
            if !out.threshold_failures.is_empty() {
                for f in &out.threshold_failures {
                    eprintln!("threshold: {f}");
                }
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(EXIT_OK)
}

fn specs_for(schema: &AttributeSchema, attrs: Option<&str>, all: bool, lambda: f64) -> Result<Vec<EnergySpec>, CliError> {
    if all {
        return Ok(all_specs(schema, lambda));
    }
    let text = attrs.ok_or_else(|| CliError::Validation("give --attrs or --all-combinations".into()))?;
    EnergySpec::parse(text, schema, lambda)
        .map(|s| vec![s])
        .map_err(|e| CliError::Validation(format!("--attrs: {e}")))
}
