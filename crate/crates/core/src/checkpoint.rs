//! JSON tensor container with a trailing CRC32 line.
//!
//! ```text
//! {"format_version":1,"meta":{...},"tensors":{"name":{"shape":[r,c],"data":[...]}}}
//! crc32:1a2b3c4d
//! ```
//!
//! Numbers are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor2};

pub const FORMAT_VERSION: u64 = 1;
const CRC_PREFIX: &str = "crc32:";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: Map<String, Value>,
    pub tensors: ParamSet,
}

impl Checkpoint {
    pub fn new(meta: Map<String, Value>, tensors: ParamSet) -> Self {
        Checkpoint { meta, tensors }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut body = String::new();
        write!(body, "{{\"format_version\":{FORMAT_VERSION},\"meta\":").unwrap();
        body.push_str(&serde_json::to_string(&self.meta)?);
        body.push_str(",\"tensors\":{");
        for (k, (name, t)) in self.tensors.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Input(format!("tensor {name:?} has non-finite values")));
            }
            if k > 0 {
                body.push(',');
            }
            body.push_str(&serde_json::to_string(name)?);
            write!(body, ":{{\"shape\":[{},{}],\"data\":[", t.rows(), t.cols()).unwrap();
            for (i, v) in t.data().iter().enumerate() {
                if i > 0 {
                    body.push(',');
                }
                write!(body, "{v:.16e}").unwrap();
            }
            body.push_str("]}");
        }
        body.push_str("}}\n");
        let crc = crc32fast::hash(body.as_bytes());
        writeln!(body, "{CRC_PREFIX}{crc:08x}").unwrap();
        Ok(body)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let trimmed = text.strip_suffix('\n').unwrap_or(text);
        let split = trimmed
            .rfind('\n')
            .ok_or_else(|| Error::Integrity("checksum line missing".into()))?;
        let (body, crc_line) = (&text[..split + 1], &trimmed[split + 1..]);
        let stored = crc_line
            .strip_prefix(CRC_PREFIX)
            .and_then(|h| u32::from_str_radix(h, 16).ok())
            .ok_or_else(|| Error::Integrity("checksum line missing or malformed".into()))?;
        let actual = crc32fast::hash(body.as_bytes());
        if stored != actual {
            return Err(Error::Integrity(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let root: Value = serde_json::from_str(body)
            .map_err(|e| Error::Integrity(format!("malformed payload: {e}")))?;
        let version = root.get("format_version").and_then(Value::as_u64);
        if version != Some(FORMAT_VERSION) {
            return Err(Error::Version(format!(
                "unsupported format_version {:?}, expected {FORMAT_VERSION}",
                root.get("format_version")
            )));
        }
        let meta = match root.get("meta") {
            Some(Value::Object(m)) => m.clone(),
            _ => return Err(Error::Integrity("meta object missing".into())),
        };
        let entries = root
            .get("tensors")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Integrity("tensors object missing".into()))?;
        let mut tensors = ParamSet::new();
        for (name, entry) in entries {
            tensors.insert(name.clone(), parse_tensor(name, entry)?);
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_text(&text)
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Integrity(format!("meta field {key:?} missing")))
    }
}

fn parse_tensor(name: &str, entry: &Value) -> Result<Tensor2> {
    let bad = || Error::Integrity(format!("tensor {name:?} is malformed"));
    let shape = entry.get("shape").and_then(Value::as_array).ok_or_else(bad)?;
    if shape.len() != 2 {
        return Err(bad());
    }
    let rows = shape[0].as_u64().ok_or_else(bad)? as usize;
    let cols = shape[1].as_u64().ok_or_else(bad)? as usize;
    let data = entry
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(bad)?
        .iter()
        .map(|v| v.as_f64().ok_or_else(bad))
        .collect::<Result<Vec<f64>>>()?;
    Tensor2::from_vec(rows, cols, data).map_err(|_| bad())
}

/// Path used while a file is being written.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Writes to `<path>.partial` and renames on success. A failed write leaves
/// only the `.partial` file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = partial_path(path);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
