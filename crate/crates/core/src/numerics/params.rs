use std::collections::BTreeMap;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Named collection of tensors. Used both for trainable parameters and for
/// their gradients; iteration order is the lexicographic order of names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor2>,
}

/// Gradients keyed by the parameter they belong to.
pub type LayerGrads = ParamSet;

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor2) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Input(format!("unknown parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor2> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Input(format!("unknown parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor2)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor2)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor2::zeros(t.rows(), t.cols())))
                .collect(),
        }
    }

    /// Accumulates `k · t` into the entry `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, t: &Tensor2, k: f64) -> Result<()> {
        match self.tensors.get_mut(name) {
            Some(dst) => dst.add_scaled(t, k),
            None => {
                let mut t = t.clone();
                t.scale(k);
                self.tensors.insert(name.to_string(), t);
                Ok(())
            }
        }
    }

    /// Checks that `self` and `other` name the same tensors with equal shapes.
    pub fn check_matches(&self, other: &ParamSet) -> Result<()> {
        for (name, g) in &other.tensors {
            let p = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::Input(format!("gradient for unknown parameter {name:?}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "param/grad",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.values().map(Tensor2::sq_norm).sum::<f64>().sqrt()
    }

    /// Rescales all tensors so that the global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            let k = max_norm / norm;
            self.tensors.values_mut().for_each(|t| t.scale(k));
        }
        norm
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor2::len).sum()
    }

    /// Concatenation of all tensors in name order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for t in self.tensors.values() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`ParamSet::flatten`] using `self` for names and shapes.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamSet> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Dimension {
                op: "unflatten",
                left: (self.num_scalars(), 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        let mut tensors = BTreeMap::new();
        for (name, t) in &self.tensors {
            let n = t.len();
            let data = flat[offset..offset + n].to_vec();
            tensors.insert(name.clone(), Tensor2::from_vec(t.rows(), t.cols(), data)?);
            offset += n;
        }
        Ok(ParamSet { tensors })
    }

    /// Like [`ParamSet::flatten`] but lays out `other`'s entries according
    /// to `self`'s names, with zeros for names absent from `other`.
    pub fn flatten_aligned(&self, other: &ParamSet) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (name, t) in &self.tensors {
            match other.tensors.get(name) {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat_n(0.0, t.len())),
            }
        }
        out
    }
}
