//! Attribute-accuracy classifiers and text metrics.

pub mod classifier;
pub mod metrics;
pub mod report;

pub use classifier::{check_disjoint, train_eval_classifiers, EvalClassifier, EvalClassifierConfig, TrainedEvalClassifiers};
pub use metrics::{
    attribute_accuracy, bleu, bleu_scores, distinct_n, self_bleu, sentence_bleu, AccuracyReport, Distinct,
    SELF_BLEU_SAMPLE,
};
pub use report::{emit_report, evaluate, version_string, MetricsReport, ScoredResponse, REPORT_VERSION};

use std::path::{Path, PathBuf};

use serde_json::Map;

use crate::checkpoint::Checkpoint;
use crate::corpus::AttributeSchema;
use crate::error::{Error, Result};

pub fn eval_classifier_path(dir: &Path, schema: &AttributeSchema, attribute: usize) -> PathBuf {
    dir.join(format!("eval_{}.ckpt", schema.attributes[attribute].name))
}

/// One checkpoint per attribute; meta records the schema and vocab hashes.
pub fn save_eval_classifiers(
    dir: &Path,
    schema: &AttributeSchema,
    vocab_hash: &str,
    classifiers: &[EvalClassifier],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    classifiers
        .iter()
        .map(|c| {
            let mut extra = Map::new();
            extra.insert("attribute_name".into(), schema.attributes[c.attribute].name.clone().into());
            extra.insert("schema_hash".into(), schema.hash().into());
            extra.insert("vocab_hash".into(), vocab_hash.into());
            let path = eval_classifier_path(dir, schema, c.attribute);
            c.to_checkpoint(extra).save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Loads every attribute's classifier; hash mismatches are version errors.
pub fn load_eval_classifiers(dir: &Path, schema: &AttributeSchema, vocab_hash: &str) -> Result<Vec<EvalClassifier>> {
    (0..schema.len())
        .map(|i| {
            let ckpt = Checkpoint::load(&eval_classifier_path(dir, schema, i))?;
            let name = &schema.attributes[i].name;
            if ckpt.meta_str("schema_hash")? != schema.hash() {
                return Err(Error::Version(format!("eval classifier for {name:?} was trained under a different schema")));
            }
            if ckpt.meta_str("vocab_hash")? != vocab_hash {
                return Err(Error::Version(format!("eval classifier for {name:?} was trained with a different vocabulary")));
            }
            let c = EvalClassifier::from_checkpoint(ckpt)?;
            if c.attribute != i || c.n_aspects() != schema.attributes[i].aspects.len() {
                return Err(Error::Schema(format!("eval classifier file for attribute {i} does not match schema")));
            }
            Ok(c)
        })
        .collect()
}
