//! Stage bodies shared by the subcommands, the pipeline and the ablation.
//! Every function takes explicit paths and returns the files it wrote.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use attrflow_core::attribute_space::{load_classifiers, save_classifiers, train_latent_classifiers, LatentClassifierConfig};
use attrflow_core::checkpoint::write_atomic;
use attrflow_core::corpus::{
    build_vocab, detokenize, encode_context, gen_corpus, load_jsonl, read_raw_jsonl, tokenize, write_jsonl,
    AttributeSchema, CorpusCounts, Vocab,
};
use attrflow_core::cvae::{load_cvae, loss_log_csv, save_cvae, train, CvaeMeta, LossRecord, TrainConfig};
use attrflow_core::eval::{
    evaluate, load_eval_classifiers, save_eval_classifiers, train_eval_classifiers, EvalClassifierConfig,
    MetricsReport, ScoredResponse,
};
use attrflow_core::sampler::{sample_grid, EnergySpec, SolverConfig};
use attrflow_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SPLIT_A_FILE: &str = "split_a.json";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Files written by [`gen_corpus_stage`], in write order.
pub struct CorpusFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub vocab: PathBuf,
    pub lexicons: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            train: dir.join("train.jsonl"),
            test: dir.join("test.jsonl"),
            vocab: dir.join("vocab.json"),
            lexicons: dir.join("lexicons.json"),
        }
    }
}

/// Generates the corpus and a vocabulary over the training split.
pub fn gen_corpus_stage(
    schema: &AttributeSchema,
    topics: &[String],
    seed: u64,
    counts: CorpusCounts,
    vocab_max: usize,
    out: &Path,
) -> Result<CorpusFiles> {
    let corpus = gen_corpus(schema, topics, seed, counts)?;
    let docs: Vec<Vec<String>> = corpus
        .train
        .iter()
        .flat_map(|r| r.context.iter().chain(std::iter::once(&r.response)))
        .map(|t| tokenize(t))
        .collect();
    let vocab = build_vocab(docs.iter(), vocab_max)?;
    ensure_dir(out)?;
    let files = CorpusFiles::in_dir(out);
    write_jsonl(&files.train, &corpus.train)?;
    write_jsonl(&files.test, &corpus.test)?;
    vocab.save(&files.vocab)?;
    write_json(&files.lexicons, &corpus.lexicons)?;
    Ok(files)
}

pub fn train_cvae_stage(
    schema: &AttributeSchema,
    train_jsonl: &Path,
    vocab_path: &Path,
    cfg: &TrainConfig,
    ckpt_out: &Path,
    log_out: &Path,
    on_epoch: impl FnMut(&LossRecord),
) -> Result<Vec<LossRecord>> {
    let vocab = Vocab::load(vocab_path)?;
    let examples = load_jsonl(train_jsonl, schema, &vocab)?;
    let outcome = train(cfg, &examples, vocab.len(), &schema.aspect_counts(), on_epoch)?;
    let mut extra = Map::new();
    extra.insert("train_config".into(), serde_json::to_value(cfg)?);
    let meta = CvaeMeta {
        schema: schema.clone(),
        vocab_hash: vocab.hash(),
        extra,
    };
    ensure_parent(ckpt_out)?;
    ensure_parent(log_out)?;
    save_cvae(&outcome.model, &meta, ckpt_out)?;
    write_atomic(log_out, loss_log_csv(&outcome.log).as_bytes())?;
    Ok(outcome.log)
}

fn load_checked_cvae(
    path: &Path,
    schema: &AttributeSchema,
    vocab: &Vocab,
) -> Result<attrflow_core::cvae::Cvae> {
    let (model, meta) = load_cvae(path, Some(schema))?;
    if meta.vocab_hash != vocab.hash() {
        return Err(Error::Version(format!(
            "{} was trained with vocabulary {}, not {}",
            path.display(),
            meta.vocab_hash,
            vocab.hash()
        )));
    }
    Ok(model)
}

/// Example ids used for latent-classifier training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecord {
    pub split: String,
    pub ids: Vec<usize>,
}

/// Split A: even positions of the training file. Split B: odd positions.
pub fn split_ids(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).step_by(2).collect(), (1..n).step_by(2).collect())
}

pub fn train_latent_stage(
    schema: &AttributeSchema,
    cvae_path: &Path,
    train_jsonl: &Path,
    vocab_path: &Path,
    cfg: &LatentClassifierConfig,
    out_dir: &Path,
) -> Result<Vec<f64>> {
    let vocab = Vocab::load(vocab_path)?;
    let model = load_checked_cvae(cvae_path, schema, &vocab)?;
    let examples = load_jsonl(train_jsonl, schema, &vocab)?;
    let (a, _) = split_ids(examples.len());
    let subset: Vec<_> = a.iter().map(|&k| examples[k].clone()).collect();
    let trained = train_latent_classifiers(&model, &subset, cfg)?;
    save_classifiers(out_dir, schema, &trained.classifiers)?;
    write_json(&out_dir.join(SPLIT_A_FILE), &SplitRecord { split: "A".into(), ids: a })?;
    Ok(trained.heldout_accuracy)
}

pub fn train_eval_stage(
    schema: &AttributeSchema,
    train_jsonl: &Path,
    vocab_path: &Path,
    split_a_path: &Path,
    cfg: &EvalClassifierConfig,
    out_dir: &Path,
) -> Result<Vec<f64>> {
    let vocab = Vocab::load(vocab_path)?;
    let examples = load_jsonl(train_jsonl, schema, &vocab)?;
    let split_a: SplitRecord = read_json(split_a_path)?;
    let (_, b) = split_ids(examples.len());
    let trained = train_eval_classifiers(&examples, &split_a.ids, &b, vocab.len(), &schema.aspect_counts(), cfg)?;
    save_eval_classifiers(out_dir, schema, &vocab.hash(), &trained.classifiers)?;
    write_json(&out_dir.join("split_b.json"), &SplitRecord { split: "B".into(), ids: b })?;
    Ok(trained.heldout_accuracy)
}

/// One line of a samples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub context: Vec<String>,
    pub response: String,
    pub u_start: f64,
    pub u_end: f64,
    /// Target aspect per attribute name.
    pub spec: Map<String, Value>,
}

impl SampleRecord {
    pub fn targets(&self, schema: &AttributeSchema) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        for (name, aspect) in &self.spec {
            let aspect = aspect
                .as_str()
                .ok_or_else(|| Error::Input(format!("spec value for {name:?} must be a string")))?;
            let i = schema.attribute_index(name)?;
            out.push((i, schema.aspect_index(i, aspect)?));
        }
        out.sort_unstable();
        Ok(out)
    }
}

fn spec_map(schema: &AttributeSchema, spec: &EnergySpec) -> Map<String, Value> {
    spec.targets()
        .into_iter()
        .map(|(i, j)| {
            let a = &schema.attributes[i];
            (a.name.clone(), Value::from(a.aspects[j].clone()))
        })
        .collect()
}

/// Specs for every aspect combination, each with weight `lambda`.
pub fn all_specs(schema: &AttributeSchema, lambda: f64) -> Vec<EnergySpec> {
    schema
        .combinations()
        .into_iter()
        .map(|c| EnergySpec::uniform(&c.into_iter().enumerate().collect::<Vec<_>>(), lambda))
        .collect()
}

pub struct SampleInputs<'a> {
    pub cvae: &'a Path,
    pub classifiers: &'a Path,
    pub vocab: &'a Path,
    pub contexts: &'a Path,
    pub max_contexts: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
pub fn sample_stage(
    schema: &AttributeSchema,
    inputs: &SampleInputs,
    specs: &[EnergySpec],
    solver: &SolverConfig,
    seed: u64,
    workers: usize,
    out: &Path,
) -> Result<Vec<SampleRecord>> {
    let vocab = Vocab::load(inputs.vocab)?;
    let model = load_checked_cvae(inputs.cvae, schema, &vocab)?;
    let classifiers = load_classifiers(inputs.classifiers, schema)?;
    let mut raw = read_raw_jsonl(inputs.contexts)?;
    if let Some(n) = inputs.max_contexts {
        raw.truncate(n);
    }
    if raw.is_empty() {
        return Err(Error::Input(format!("{} has no contexts", inputs.contexts.display())));
    }
    let contexts: Vec<Vec<u32>> = raw
        .iter()
        .map(|r| encode_context(&r.context, &vocab).map(|c| c.concat()))
        .collect::<Result<_>>()?;
    let samples = sample_grid(&model, &classifiers, specs, &contexts, solver, seed, workers)?;
    let records: Vec<SampleRecord> = samples
        .into_iter()
        .enumerate()
        .map(|(k, s)| SampleRecord {
            context: raw[k % raw.len()].context.clone(),
            response: detokenize(&vocab.decode(&s.response)),
            u_start: s.u_start,
            u_end: s.u_end,
            spec: spec_map(schema, &specs[k / raw.len()]),
        })
        .collect();
    ensure_parent(out)?;
    write_jsonl_records(out, &records)?;
    Ok(records)
}

/// Scores a samples file. References are the test responses whose context
/// matches the sample's context.
pub fn eval_stage(
    schema: &AttributeSchema,
    responses: &Path,
    refs: &Path,
    eval_dir: &Path,
    vocab_path: &Path,
    seed: u64,
    config: Value,
    report_out: &Path,
) -> Result<MetricsReport> {
    let vocab = Vocab::load(vocab_path)?;
    let classifiers = load_eval_classifiers(eval_dir, schema, &vocab.hash())?;
    let records: Vec<SampleRecord> = read_jsonl(responses)?;
    let mut by_context: HashMap<Vec<String>, Vec<Vec<u32>>> = HashMap::new();
    for r in read_raw_jsonl(refs)? {
        let ids = vocab.encode(&tokenize(&r.response));
        by_context.entry(r.context).or_default().push(ids);
    }
    let items = records
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let references = by_context
                .get(&r.context)
                .cloned()
                .ok_or_else(|| Error::Data(format!("sample {} has no reference with the same context", n + 1)))?;
            Ok(ScoredResponse {
                response: vocab.encode(&tokenize(&r.response)),
                targets: r.targets(schema)?,
                references,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&items, schema, &classifiers, seed, config)?;
    ensure_parent(report_out)?;
    attrflow_core::eval::emit_report(&report, report_out)?;
    Ok(report)
}
