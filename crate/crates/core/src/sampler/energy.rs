use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attribute_space::LatentClassifier;
use crate::corpus::AttributeSchema;
use crate::error::{Error, Result};

/// One weighted target: maximize `weight · f_attribute(z)[aspect]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerm {
    pub attribute: usize,
    pub aspect: usize,
    pub weight: f64,
}

/// Weighted combination of target-aspect logits. The sampler ascends
/// `U(z) = Σ λ_i f_i(z)[a_i]`; the energy is `-U`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    pub terms: Vec<EnergyTerm>,
}

impl EnergySpec {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Every `(attribute, aspect)` pair with the same weight.
    pub fn uniform(targets: &[(usize, usize)], weight: f64) -> Self {
        EnergySpec {
            terms: targets
                .iter()
                .map(|&(attribute, aspect)| EnergyTerm {
                    attribute,
                    aspect,
                    weight,
                })
                .collect(),
        }
    }

    /// Parses `"style=lyrical,attitude=optimistic"` against `schema`.
    pub fn parse(text: &str, schema: &AttributeSchema, weight: f64) -> Result<Self> {
        let mut targets = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, aspect) = part
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("expected attribute=aspect, got {part:?}")))?;
            let i = schema.attribute_index(name.trim())?;
            let j = schema.aspect_index(i, aspect.trim())?;
            targets.push((i, j));
        }
        let spec = Self::uniform(&targets, weight);
        spec.validate_schema(schema)?;
        Ok(spec)
    }

    pub fn scaled(&self, k: f64) -> Self {
        EnergySpec {
            terms: self
                .terms
                .iter()
                .map(|t| EnergyTerm {
                    weight: t.weight * k,
                    ..*t
                })
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn check_terms(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.terms {
            if !seen.insert(t.attribute) {
                return Err(Error::Input(format!("attribute {} appears twice in the spec", t.attribute)));
            }
            if !(t.weight.is_finite() && t.weight >= 0.0) {
                return Err(Error::Range(format!("weight {} must be finite and non-negative", t.weight)));
            }
        }
        Ok(())
    }

    pub fn validate_schema(&self, schema: &AttributeSchema) -> Result<()> {
        self.check_terms()?;
        for t in &self.terms {
            schema.check_aspect(t.attribute, t.aspect)?;
        }
        Ok(())
    }

    /// Checks the spec against classifiers indexed by attribute.
    pub fn validate(&self, classifiers: &[LatentClassifier]) -> Result<()> {
        self.check_terms()?;
        for t in &self.terms {
            let c = classifier_for(classifiers, t.attribute)?;
            if t.aspect >= c.n_aspects() {
                return Err(Error::Range(format!(
                    "aspect {} out of range for attribute {}",
                    t.aspect, t.attribute
                )));
            }
        }
        Ok(())
    }

    /// `(attribute, aspect)` pairs in order.
    pub fn targets(&self) -> Vec<(usize, usize)> {
        self.terms.iter().map(|t| (t.attribute, t.aspect)).collect()
    }
}

pub(crate) fn classifier_for(classifiers: &[LatentClassifier], attribute: usize) -> Result<&LatentClassifier> {
    match classifiers.get(attribute) {
        Some(c) if c.attribute == attribute => Ok(c),
        Some(_) => Err(Error::Input(format!("classifier list is not indexed by attribute at {attribute}"))),
        None => Err(Error::Range(format!("no classifier for attribute {attribute}"))),
    }
}

/// `U(z) = Σ λ_i f_i(z)[a_i]`.
pub fn aspect_potential(spec: &EnergySpec, classifiers: &[LatentClassifier], z: &[f64]) -> Result<f64> {
    let mut u = 0.0;
    for t in &spec.terms {
        let c = classifier_for(classifiers, t.attribute)?;
        let logits = c.logits(z)?;
        let l = logits
            .get(t.aspect)
            .ok_or_else(|| Error::Range(format!("aspect {} out of range", t.aspect)))?;
        u += t.weight * l;
    }
    Ok(u)
}

/// `∇_z U(z)`.
pub fn potential_grad(spec: &EnergySpec, classifiers: &[LatentClassifier], z: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; z.len()];
    for t in &spec.terms {
        if t.weight == 0.0 {
            continue;
        }
        let c = classifier_for(classifiers, t.attribute)?;
        let gi = c.logit_grad(z, t.aspect)?;
        g.iter_mut().zip(&gi).for_each(|(a, b)| *a += t.weight * b);
    }
    Ok(g)
}
