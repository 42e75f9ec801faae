use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::Deserializer;
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use super::schema::AttributeSchema;
use super::tokenize::tokenize;
use super::vocab::Vocab;
use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};

/// Per-turn context cap in tokens.
pub const MAX_TURN_LEN: usize = 32;
/// Response cap in tokens (EOS excluded).
pub const MAX_RESPONSE_LEN: usize = 24;

/// A dialogue record as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExample {
    pub context: Vec<String>,
    pub response: String,
    /// `(attribute, aspect)` names, in schema order.
    #[serde(serialize_with = "ser_labels", deserialize_with = "de_labels")]
    pub labels: Vec<(String, String)>,
}

fn ser_labels<S: Serializer>(labels: &[(String, String)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut m = s.serialize_map(Some(labels.len()))?;
    for (k, v) in labels {
        m.serialize_entry(k, v)?;
    }
    m.end()
}

fn de_labels<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(String, String)>, D::Error> {
    let m = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
    m.into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => Ok((k, s)),
            other => Err(serde::de::Error::custom(format!(
                "label {k:?} must be a string, got {other}"
            ))),
        })
        .collect()
}

/// Tokenized dialogue: context turns, response and partial labels
/// (attribute index → aspect index).
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueExample {
    pub context: Vec<Vec<u32>>,
    pub response: Vec<u32>,
    pub labels: BTreeMap<usize, usize>,
}

impl DialogueExample {
    /// All context tokens in order.
    pub fn context_flat(&self) -> Vec<u32> {
        self.context.iter().flatten().copied().collect()
    }

    /// The single labeled attribute of a training example, if exactly one.
    pub fn single_attribute(&self) -> Option<usize> {
        if self.labels.len() == 1 {
            self.labels.keys().next().copied()
        } else {
            None
        }
    }
}

impl RawExample {
    /// Label indices under `schema`.
    pub fn label_indices(&self, schema: &AttributeSchema) -> Result<BTreeMap<usize, usize>> {
        let mut out = BTreeMap::new();
        for (attr, aspect) in &self.labels {
            let i = schema.attribute_index(attr)?;
            let j = schema.aspect_index(i, aspect)?;
            out.insert(i, j);
        }
        Ok(out)
    }

    /// Tokenizes and encodes this record; turns are truncated to
    /// [`MAX_TURN_LEN`], responses must fit in [`MAX_RESPONSE_LEN`].
    pub fn encode(&self, schema: &AttributeSchema, vocab: &Vocab) -> Result<DialogueExample> {
        let context = encode_context(&self.context, vocab)?;
        let response = vocab.encode(&tokenize(&self.response));
        if response.is_empty() || response.len() > MAX_RESPONSE_LEN {
            return Err(Error::Input(format!(
                "response length {} outside [1, {MAX_RESPONSE_LEN}]",
                response.len()
            )));
        }
        Ok(DialogueExample {
            context,
            response,
            labels: self.label_indices(schema)?,
        })
    }
}

/// Tokenizes context turns, truncating each to [`MAX_TURN_LEN`].
pub fn encode_context<S: AsRef<str>>(turns: &[S], vocab: &Vocab) -> Result<Vec<Vec<u32>>> {
    if turns.is_empty() {
        return Err(Error::Input("context has no turns".into()));
    }
    let context: Vec<Vec<u32>> = turns
        .iter()
        .map(|t| {
            let mut ids = vocab.encode(&tokenize(t.as_ref()));
            ids.truncate(MAX_TURN_LEN);
            ids
        })
        .collect();
    if context.iter().all(Vec::is_empty) {
        return Err(Error::Input("context is empty".into()));
    }
    Ok(context)
}

/// Writes through a `.partial` file that is renamed on success.
pub fn write_jsonl(path: &Path, records: &[RawExample]) -> Result<()> {
    write_atomic(path, to_jsonl_string(records).as_bytes())
}

/// Serialized form used by [`write_jsonl`].
pub fn to_jsonl_string(records: &[RawExample]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// Reads raw records; blank lines are skipped, line numbers are 1-based.
pub fn read_raw_jsonl(path: &Path) -> Result<Vec<RawExample>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawExample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads and encodes a JSONL file. Unknown tokens map to UNK; unknown
/// attribute or aspect names are schema errors.
pub fn load_jsonl(path: &Path, schema: &AttributeSchema, vocab: &Vocab) -> Result<Vec<DialogueExample>> {
    read_raw_jsonl(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.encode(schema, vocab).map_err(|e| match e {
                Error::Input(m) => Error::Parse {
                    line: i + 1,
                    message: m,
                },
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::{build_vocab, UNK};

    fn rec() -> RawExample {
        RawExample {
            context: vec!["what do you think about jazz music?".into()],
            response: "jazz music moonlit velvet for now in turn.".into(),
            labels: vec![("style".into(), "lyrical".into())],
        }
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.jsonl");
        std::fs::write(&p, "").unwrap();
        let v = build_vocab([tokenize("a")], 10).unwrap();
        assert!(load_jsonl(&p, &AttributeSchema::default(), &v).unwrap().is_empty());
    }

    #[test]
    fn round_trip_preserves_token_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let r = rec();
        let docs = [tokenize(&r.context[0]), tokenize(&r.response)];
        let v = build_vocab(docs.iter(), 100).unwrap();
        write_jsonl(&p, &[r.clone(), r.clone()]).unwrap();
        let schema = AttributeSchema::default();
        let loaded = load_jsonl(&p, &schema, &v).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0], r.encode(&schema, &v).unwrap());
        assert_eq!(read_raw_jsonl(&p).unwrap()[0], r);
        assert!(!loaded[0].response.contains(&UNK));
    }

    #[test]
    fn missing_response_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&rec()).unwrap();
        std::fs::write(&p, format!("{good}\n{{\"context\":[\"hi\"],\"labels\":{{}}}}\n")).unwrap();
        match read_raw_jsonl(&p) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("response"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_aspect_is_schema_error() {
        let mut r = rec();
        r.labels[0].1 = "baroque".into();
        let v = build_vocab([tokenize("a")], 10).unwrap();
        assert!(matches!(
            r.encode(&AttributeSchema::default(), &v),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn labels_serialize_in_given_order() {
        let r = RawExample {
            context: vec!["q?".into()],
            response: "r.".into(),
            labels: vec![
                ("style".into(), "plain".into()),
                ("attitude".into(), "optimistic".into()),
            ],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"context":["q?"],"response":"r.","labels":{"style":"plain","attitude":"optimistic"}}"#
        );
    }
}
