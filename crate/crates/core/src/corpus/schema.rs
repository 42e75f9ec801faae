use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One personality attribute and its mutually exclusive aspects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub aspects: Vec<String>,
    /// Optional marker lexicons, keyed by aspect name. Aspects without an
    /// entry fall back to the built-in lexicons.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub markers: BTreeMap<String, Vec<String>>,
}

/// Ordered list of attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub attributes: Vec<Attribute>,
}

impl Default for AttributeSchema {
    fn default() -> Self {
        let attr = |name: &str, a: &str, b: &str| Attribute {
            name: name.into(),
            aspects: vec![a.into(), b.into()],
            markers: BTreeMap::new(),
        };
        AttributeSchema {
            attributes: vec![
                attr("style", "lyrical", "plain"),
                attr("attitude", "optimistic", "pessimistic"),
                attr("mind", "critical", "emotional"),
            ],
        }
    }
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let s = AttributeSchema { attributes };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: AttributeSchema = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Schema("schema has no attributes".into()));
        }
        let mut names = HashSet::new();
        for a in &self.attributes {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute {:?}", a.name)));
            }
            if a.aspects.len() < 2 {
                return Err(Error::Schema(format!(
                    "attribute {:?} needs at least two aspects",
                    a.name
                )));
            }
            let mut seen = HashSet::new();
            for asp in &a.aspects {
                if !seen.insert(asp.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate aspect {asp:?} in attribute {:?}",
                        a.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Aspect count per attribute.
    pub fn aspect_counts(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.aspects.len()).collect()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown attribute {name:?}")))
    }

    pub fn aspect_index(&self, attribute: usize, aspect: &str) -> Result<usize> {
        let a = self
            .attributes
            .get(attribute)
            .ok_or_else(|| Error::Schema(format!("attribute index {attribute} out of range")))?;
        a.aspects
            .iter()
            .position(|x| x == aspect)
            .ok_or_else(|| Error::Schema(format!("unknown aspect {aspect:?} for {:?}", a.name)))
    }

    pub fn check_aspect(&self, attribute: usize, aspect: usize) -> Result<()> {
        match self.attributes.get(attribute) {
            Some(a) if aspect < a.aspects.len() => Ok(()),
            Some(a) => Err(Error::Schema(format!(
                "aspect index {aspect} out of range for {:?}",
                a.name
            ))),
            None => Err(Error::Schema(format!(
                "attribute index {attribute} out of range"
            ))),
        }
    }

    /// Every assignment of one aspect per attribute, in lexicographic order
    /// (the last attribute varies fastest).
    pub fn combinations(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for a in &self.attributes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..a.aspects.len()).map(move |j| {
                        let mut p = prefix.clone();
                        p.push(j);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Human-readable label for an aspect assignment, e.g.
    /// `style=lyrical,attitude=optimistic`.
    pub fn describe(&self, assignment: &[(usize, usize)]) -> String {
        assignment
            .iter()
            .map(|&(i, j)| {
                let a = &self.attributes[i];
                format!("{}={}", a.name, a.aspects[j])
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Stable content hash over attribute and aspect names.
    pub fn hash(&self) -> String {
        let mut h = crc32fast::Hasher::new();
        for a in &self.attributes {
            h.update(a.name.as_bytes());
            h.update(&[0]);
            for asp in &a.aspects {
                h.update(asp.as_bytes());
                h.update(&[1]);
            }
            h.update(&[2]);
        }
        format!("{:08x}", h.finalize())
    }
}
