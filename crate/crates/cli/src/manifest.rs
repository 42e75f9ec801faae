//! Content hashes for every file under an output root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use attrflow_core::checkpoint::write_atomic;
use attrflow_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    /// Relative path (forward slashes) → sha256 hex.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

impl Manifest {
    /// Hashes every file below `root` except the manifest itself.
    pub fn build(root: &Path, version: String) -> Result<Self> {
        let mut paths = Vec::new();
        walk(root, &mut paths)?;
        let mut files = BTreeMap::new();
        for p in paths {
            let rel = p.strip_prefix(root).expect("walked path lies under root");
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if key == MANIFEST_FILE {
                continue;
            }
            files.insert(key, sha256_file(&p)?);
        }
        Ok(Manifest { version, files })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Relative paths whose hash differs or that exist on one side only.
    pub fn diff(&self, other: &Manifest) -> Vec<String> {
        let mut keys: Vec<&String> = self.files.keys().chain(other.files.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter(|k| self.files.get(*k) != other.files.get(*k))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn lists_nested_files_but_not_itself() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a/b")).unwrap();
        std::fs::write(dir.path().join("a/b/x"), "1").unwrap();
        std::fs::write(dir.path().join("y"), "2").unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "old").unwrap();
        let m = Manifest::build(dir.path(), "v".into()).unwrap();
        assert_eq!(m.files.keys().collect::<Vec<_>>(), vec!["a/b/x", "y"]);

        std::fs::write(dir.path().join("y"), "3").unwrap();
        let m2 = Manifest::build(dir.path(), "v".into()).unwrap();
        assert_eq!(m.diff(&m2), vec!["y".to_string()]);
        assert!(m.diff(&m).is_empty());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f"), "x").unwrap();
        let m = Manifest::build(dir.path(), "v1".into()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        m.save(&p).unwrap();
        assert_eq!(Manifest::load(&p).unwrap(), m);
    }
}
