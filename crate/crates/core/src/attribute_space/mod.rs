//! Post-hoc classifiers over the frozen latent space and their input
//! gradients.

mod classifier;
mod training;

use std::path::{Path, PathBuf};

use serde_json::Map;

pub use classifier::LatentClassifier;
pub use training::{encode_latents, train_latent_classifiers, LatentClassifierConfig, TrainedLatentClassifiers};

use crate::checkpoint::Checkpoint;
use crate::corpus::AttributeSchema;
use crate::error::{Error, Result};

/// Raw logits of `f` at `z`.
pub fn classify_latent(f: &LatentClassifier, z: &[f64]) -> Result<Vec<f64>> {
    f.logits(z)
}

/// `∇_z f(z)[aspect]`.
pub fn latent_logit_grad(f: &LatentClassifier, z: &[f64], aspect: usize) -> Result<Vec<f64>> {
    f.logit_grad(z, aspect)
}

pub fn classifier_path(dir: &Path, schema: &AttributeSchema, attribute: usize) -> PathBuf {
    dir.join(format!("latent_{}.ckpt", schema.attributes[attribute].name))
}

/// Writes one checkpoint per attribute into `dir`; returns the paths.
pub fn save_classifiers(dir: &Path, schema: &AttributeSchema, classifiers: &[LatentClassifier]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    classifiers
        .iter()
        .map(|c| {
            let mut extra = Map::new();
            extra.insert("attribute_name".into(), schema.attributes[c.attribute].name.clone().into());
            extra.insert("schema_hash".into(), schema.hash().into());
            let path = classifier_path(dir, schema, c.attribute);
            c.to_checkpoint(extra).save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Loads the classifiers of every attribute in `schema` from `dir`.
pub fn load_classifiers(dir: &Path, schema: &AttributeSchema) -> Result<Vec<LatentClassifier>> {
    (0..schema.len())
        .map(|i| {
            let ckpt = Checkpoint::load(&classifier_path(dir, schema, i))?;
            if ckpt.meta_str("schema_hash")? != schema.hash() {
                return Err(Error::Version(format!(
                    "latent classifier for {:?} was trained under a different schema",
                    schema.attributes[i].name
                )));
            }
            let c = LatentClassifier::from_checkpoint(ckpt)?;
            if c.attribute != i || c.n_aspects() != schema.attributes[i].aspects.len() {
                return Err(Error::Schema(format!("classifier file for attribute {i} does not match schema")));
            }
            Ok(c)
        })
        .collect()
}
