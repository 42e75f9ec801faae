use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::checkpoint::Checkpoint;
use crate::corpus::{DialogueExample, UNK};
use crate::error::{Error, Result};
use crate::numerics::layers::{argmax, cross_entropy};
use crate::numerics::{adamw_update, AdamWConfig, AdamWState, ParamSet, SeededRng, Tensor2};

const W: &str = "w";
const B: &str = "b";

/// Bag-of-words logistic regression over the vocabulary for one attribute.
/// Features are binary token presence; special tokens are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalClassifier {
    pub attribute: usize,
    params: ParamSet,
}

fn features(tokens: &[u32], vocab_size: usize) -> Vec<usize> {
    let set: BTreeSet<usize> = tokens
        .iter()
        .map(|&t| t as usize)
        .filter(|&t| t > UNK as usize && t < vocab_size)
        .collect();
    set.into_iter().collect()
}

impl EvalClassifier {
    pub fn zeros(attribute: usize, vocab_size: usize, n_aspects: usize) -> Self {
        let mut params = ParamSet::new();
        params.insert(W, Tensor2::zeros(vocab_size, n_aspects));
        params.insert(B, Tensor2::zeros(1, n_aspects));
        EvalClassifier { attribute, params }
    }

    pub fn vocab_size(&self) -> usize {
        self.params.get(W).expect("weights").rows()
    }

    pub fn n_aspects(&self) -> usize {
        self.params.get(W).expect("weights").cols()
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn logits(&self, tokens: &[u32]) -> Vec<f64> {
        let w = self.params.get(W).expect("weights");
        let mut out = self.params.get(B).expect("bias").row(0).to_vec();
        for t in features(tokens, w.rows()) {
            out.iter_mut().zip(w.row(t)).for_each(|(o, v)| *o += v);
        }
        out
    }

    pub fn predict(&self, tokens: &[u32]) -> usize {
        argmax(&self.logits(tokens))
    }

    fn loss_and_grads(&self, batch: &[(&[u32], usize)]) -> (f64, ParamSet) {
        let mut grads = self.params.zeros_like();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let vocab = self.vocab_size();
        let mut dw = grads.get(W).expect("w").clone();
        let mut db = grads.get(B).expect("b").clone();
        for (tokens, y) in batch {
            let (l, d) = cross_entropy(&self.logits(tokens), *y);
            loss += l / n;
            for t in features(tokens, vocab) {
                dw.row_mut(t).iter_mut().zip(&d).for_each(|(g, v)| *g += v / n);
            }
            db.row_mut(0).iter_mut().zip(&d).for_each(|(g, v)| *g += v / n);
        }
        grads.insert(W, dw);
        grads.insert(B, db);
        (loss, grads)
    }

    pub fn to_checkpoint(&self, extra: Map<String, Value>) -> Checkpoint {
        let mut m = Map::new();
        m.insert("kind".into(), "eval_classifier".into());
        m.insert("attribute".into(), self.attribute.into());
        m.extend(extra);
        Checkpoint::new(m, self.params.clone())
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.meta_str("kind")? != "eval_classifier" {
            return Err(Error::Version("checkpoint is not an eval classifier".into()));
        }
        let attribute = ckpt
            .meta
            .get("attribute")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Integrity("meta field \"attribute\" missing".into()))? as usize;
        let w = ckpt.tensors.get(W)?;
        let b = ckpt.tensors.get(B)?;
        if ckpt.tensors.len() != 2 || b.shape() != (1, w.cols()) {
            return Err(Error::Integrity("eval classifier tensors are malformed".into()));
        }
        Ok(EvalClassifier {
            attribute,
            params: ckpt.tensors,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub holdout_fraction: f64,
    /// Null-model control: permute labels before the train/held-out split.
    pub shuffle_labels: bool,
    pub seed: u64,
}

impl Default for EvalClassifierConfig {
    fn default() -> Self {
        EvalClassifierConfig {
            epochs: 25,
            batch_size: 64,
            lr: 0.01,
            weight_decay: 0.0,
            holdout_fraction: 0.1,
            shuffle_labels: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEvalClassifiers {
    pub classifiers: Vec<EvalClassifier>,
    pub heldout_accuracy: Vec<f64>,
}

/// Errors with a protocol error when the two id sets share an element.
pub fn check_disjoint(split_a: &[usize], split_b: &[usize]) -> Result<()> {
    let a: BTreeSet<usize> = split_a.iter().copied().collect();
    if let Some(id) = split_b.iter().find(|id| a.contains(id)) {
        return Err(Error::Protocol(format!(
            "example {id} appears in both the latent-classifier and the eval-classifier split"
        )));
    }
    Ok(())
}

/// Trains one classifier per attribute on the responses of split B
/// (`split_b` indexes `examples`); `split_a` are the ids used for the
/// latent classifiers and must not overlap.
pub fn train_eval_classifiers(
    examples: &[DialogueExample],
    split_a: &[usize],
    split_b: &[usize],
    vocab_size: usize,
    aspect_counts: &[usize],
    cfg: &EvalClassifierConfig,
) -> Result<TrainedEvalClassifiers> {
    check_disjoint(split_a, split_b)?;
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::Input("invalid eval classifier config".into()));
    }
    if let Some(&bad) = split_b.iter().find(|&&k| k >= examples.len()) {
        return Err(Error::Input(format!("example id {bad} out of range")));
    }
    let adam = AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut classifiers = Vec::new();
    let mut heldout_accuracy = Vec::new();
    for (attr, &n_aspects) in aspect_counts.iter().enumerate() {
        let mut rows: Vec<(&[u32], usize)> = split_b
            .iter()
            .filter_map(|&k| examples[k].labels.get(&attr).map(|&j| (examples[k].response.as_slice(), j)))
            .collect();
        let distinct: BTreeSet<usize> = rows.iter().map(|r| r.1).collect();
        if distinct.len() < 2 || distinct.iter().any(|&j| j >= n_aspects) {
            return Err(Error::Data(format!("attribute {attr} lacks usable labels in split B")));
        }
        let root = SeededRng::new(cfg.seed, "eval-classifiers").substream(attr as u64);
        root.substream(0).shuffle(&mut rows);
        if cfg.shuffle_labels {
            let mut labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
            root.substream(1).shuffle(&mut labels);
            rows.iter_mut().zip(labels).for_each(|(r, j)| r.1 = j);
        }
        let n_hold = (rows.len() as f64 * cfg.holdout_fraction).floor() as usize;
        let (train, hold) = rows.split_at(rows.len() - n_hold);
        let mut clf = EvalClassifier::zeros(attr, vocab_size, n_aspects);
        let mut state = AdamWState::new(&clf.params);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = root.substream(2);
        let mut step = 0;
        for _ in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<(&[u32], usize)> = chunk.iter().map(|&k| train[k]).collect();
                let (_, grads) = clf.loss_and_grads(&batch);
                step += 1;
                adamw_update(&mut clf.params, &grads, &mut state, step, &adam)?;
            }
        }
        let acc = if hold.is_empty() {
            f64::NAN
        } else {
            hold.iter().filter(|(t, j)| clf.predict(t) == *j).count() as f64 / hold.len() as f64
        };
        classifiers.push(clf);
        heldout_accuracy.push(acc);
    }
    Ok(TrainedEvalClassifiers {
        classifiers,
        heldout_accuracy,
    })
}
