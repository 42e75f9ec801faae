//! Scalar loss terms of the training objective and their gradients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{Cvae, LatentGaussian};
use crate::error::{Error, Result};
use crate::numerics::layers::cross_entropy;

/// Direction of the KL regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(p(z|C) ‖ q(z|C,r))`, prior first.
    #[default]
    PriorPosterior,
    /// `KL(q(z|C,r) ‖ p(z|C))`, the usual VAE orientation.
    PosteriorPrior,
}

/// `KL(p ‖ q)` between diagonal Gaussians, summed over dimensions.
pub fn kl_diag_gaussian(p: &LatentGaussian, q: &LatentGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            op: "kl_diag_gaussian",
            left: (1, p.dim()),
            right: (1, q.dim()),
        });
    }
    Ok((0..p.dim())
        .map(|d| kl_term(p.mu[d], p.log_var[d], q.mu[d], q.log_var[d]))
        .sum())
}

#[inline]
fn kl_term(mu_p: f64, lv_p: f64, mu_q: f64, lv_q: f64) -> f64 {
    let diff = mu_p - mu_q;
    0.5 * (lv_q - lv_p) + (lv_p.exp() + diff * diff) / (2.0 * lv_q.exp()) - 0.5
}

/// Partial derivatives of one KL term w.r.t. `(μ_p, log σ_p², μ_q, log σ_q²)`.
#[inline]
pub(crate) fn kl_term_grad(mu_p: f64, lv_p: f64, mu_q: f64, lv_q: f64) -> [f64; 4] {
    let var_q = lv_q.exp();
    let diff = mu_p - mu_q;
    let dmu_p = diff / var_q;
    let dlv_p = -0.5 + lv_p.exp() / (2.0 * var_q);
    let dlv_q = 0.5 - (lv_p.exp() + diff * diff) / (2.0 * var_q);
    [dmu_p, dlv_p, -dmu_p, dlv_q]
}

/// Cyclical KL weight: linear ramp 0 → 1 over the first half of each cycle,
/// then flat at 1.
pub fn kl_weight(step: u64, cycle_len: u64) -> f64 {
    if cycle_len == 0 {
        return 1.0;
    }
    let pos = (step % cycle_len) as f64 / cycle_len as f64;
    (2.0 * pos).min(1.0)
}

/// Cross-entropy of the aspect heads at `z`, summed over labeled attributes.
pub fn aspect_classification_loss(model: &Cvae, z: &[f64], labels: &BTreeMap<usize, usize>) -> Result<f64> {
    Ok(aspect_loss_and_grads(model, z, labels)?.0)
}

/// Loss, `∂/∂z`, and per-head logit gradients `(attribute, dlogits)`.
pub(crate) fn aspect_loss_and_grads(
    model: &Cvae,
    z: &[f64],
    labels: &BTreeMap<usize, usize>,
) -> Result<(f64, Vec<f64>, Vec<(usize, Vec<f64>)>)> {
    let mut loss = 0.0;
    let mut dz = vec![0.0; z.len()];
    let mut dheads = Vec::with_capacity(labels.len());
    for (&i, &j) in labels {
        let n = *model
            .arch
            .aspect_counts
            .get(i)
            .ok_or_else(|| Error::Schema(format!("attribute index {i} out of range")))?;
        if j >= n {
            return Err(Error::Schema(format!(
                "aspect index {j} out of range for attribute {i} with {n} aspects"
            )));
        }
        let logits = model.head_logits(i, z)?;
        let (l, dlogits) = cross_entropy(&logits, j);
        loss += l;
        let w = model.p(&super::model::names::head_w(i));
        for (d, dzv) in dz.iter_mut().enumerate() {
            *dzv += w.row(d).iter().zip(&dlogits).map(|(a, b)| a * b).sum::<f64>();
        }
        dheads.push((i, dlogits));
    }
    Ok((loss, dz, dheads))
}

/// `Σ_{a<b} ‖m_a − m_b‖₂` over per-attribute latent means.
pub fn attribute_distance_loss(group_means: &[Vec<f64>]) -> Result<f64> {
    Ok(attribute_distance_with_grad(group_means)?.0)
}

/// Loss and gradient w.r.t. each group mean. At coincident means the
/// (sub)gradient is taken as zero.
pub(crate) fn attribute_distance_with_grad(means: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let dim = means.first().map_or(0, Vec::len);
    if means.iter().any(|m| m.len() != dim) {
        return Err(Error::Dimension {
            op: "attribute_distance_loss",
            left: (means.len(), dim),
            right: (1, means.iter().map(Vec::len).max().unwrap_or(0)),
        });
    }
    let mut loss = 0.0;
    let mut grads = vec![vec![0.0; dim]; means.len()];
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            let diff: Vec<f64> = means[a].iter().zip(&means[b]).map(|(x, y)| x - y).collect();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            loss += norm;
            if norm > 1e-12 {
                for d in 0..dim {
                    grads[a][d] += diff[d] / norm;
                    grads[b][d] -= diff[d] / norm;
                }
            }
        }
    }
    Ok((loss, grads))
}
