use std::path::Path;

use serde_json::{Map, Value};

use super::model::{Cvae, CvaeArch};
use crate::checkpoint::Checkpoint;
use crate::corpus::AttributeSchema;
use crate::error::{Error, Result};

/// Provenance stored next to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CvaeMeta {
    pub schema: AttributeSchema,
    pub vocab_hash: String,
    /// Free-form extras (training config, seeds).
    pub extra: Map<String, Value>,
}

pub fn cvae_checkpoint(model: &Cvae, meta: &CvaeMeta) -> Result<Checkpoint> {
    let mut m = Map::new();
    m.insert("kind".into(), "cvae".into());
    m.insert("schema".into(), serde_json::to_value(&meta.schema)?);
    m.insert("schema_hash".into(), meta.schema.hash().into());
    m.insert("vocab_hash".into(), meta.vocab_hash.clone().into());
    m.insert("latent_dim".into(), model.arch.latent_dim.into());
    m.insert("arch".into(), serde_json::to_value(&model.arch)?);
    for (k, v) in &meta.extra {
        m.insert(k.clone(), v.clone());
    }
    Ok(Checkpoint::new(m, model.params.clone()))
}

pub fn save_cvae(model: &Cvae, meta: &CvaeMeta, path: &Path) -> Result<()> {
    cvae_checkpoint(model, meta)?.save(path)
}

/// Rebuilds a model from a checkpoint. With `expected_schema`, a schema
/// hash mismatch is a version error.
pub fn cvae_from_checkpoint(ckpt: Checkpoint, expected_schema: Option<&AttributeSchema>) -> Result<(Cvae, CvaeMeta)> {
    if ckpt.meta_str("kind")? != "cvae" {
        return Err(Error::Version(format!("checkpoint kind {:?} is not cvae", ckpt.meta_str("kind")?)));
    }
    let hash = ckpt.meta_str("schema_hash")?.to_string();
    if let Some(s) = expected_schema {
        if s.hash() != hash {
            return Err(Error::Version(format!(
                "checkpoint schema hash {hash} does not match {}",
                s.hash()
            )));
        }
    }
    let schema: AttributeSchema = serde_json::from_value(ckpt.meta.get("schema").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Integrity(format!("checkpoint schema: {e}")))?;
    if schema.hash() != hash {
        return Err(Error::Integrity("stored schema does not match its hash".into()));
    }
    let arch: CvaeArch = serde_json::from_value(ckpt.meta.get("arch").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Integrity(format!("checkpoint arch: {e}")))?;
    let vocab_hash = ckpt.meta_str("vocab_hash")?.to_string();
    let reserved = ["kind", "schema", "schema_hash", "vocab_hash", "latent_dim", "arch"];
    let extra = ckpt
        .meta
        .iter()
        .filter(|(k, _)| !reserved.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let model = Cvae::from_params(arch, ckpt.tensors)?;
    Ok((
        model,
        CvaeMeta {
            schema,
            vocab_hash,
            extra,
        },
    ))
}

pub fn load_cvae(path: &Path, expected_schema: Option<&AttributeSchema>) -> Result<(Cvae, CvaeMeta)> {
    cvae_from_checkpoint(Checkpoint::load(path)?, expected_schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Attribute;
    use crate::numerics::SeededRng;

    fn fixture() -> (Cvae, CvaeMeta) {
        let model = Cvae::init(CvaeArch::new(15, 4, 5, 3, vec![2, 2, 2]), &mut SeededRng::new(2, "init")).unwrap();
        let mut extra = Map::new();
        extra.insert("seed".into(), 2.into());
        (
            model,
            CvaeMeta {
                schema: AttributeSchema::default(),
                vocab_hash: "00ff00ff".into(),
                extra,
            },
        )
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (model, meta) = fixture();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_cvae(&model, &meta, &a).unwrap();
        let (loaded, meta2) = load_cvae(&a, Some(&meta.schema)).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(meta2, meta);
        save_cvae(&loaded, &meta2, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_checkpoint_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let (model, meta) = fixture();
        let p = dir.path().join("t.ckpt");
        save_cvae(&model, &meta, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 40]).unwrap();
        assert!(matches!(load_cvae(&p, None), Err(Error::Integrity(_))));
    }

    #[test]
    fn different_schema_is_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let (model, meta) = fixture();
        let p = dir.path().join("s.ckpt");
        save_cvae(&model, &meta, &p).unwrap();
        let mut other = AttributeSchema::default();
        other.attributes[0] = Attribute {
            name: "tone".into(),
            aspects: vec!["warm".into(), "cold".into()],
            markers: Default::default(),
        };
        assert!(matches!(load_cvae(&p, Some(&other)), Err(Error::Version(_))));
    }
}
