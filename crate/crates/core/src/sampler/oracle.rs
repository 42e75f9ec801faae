use super::energy::{aspect_potential, classifier_for, EnergySpec};
use crate::attribute_space::LatentClassifier;
use crate::cvae::{reparameterize, LatentGaussian};
use crate::error::{Error, Result};
use crate::numerics::layers::softmax;
use crate::numerics::SeededRng;

pub const MIN_ORACLE_SAMPLES: usize = 1000;
pub const MIN_ESS: f64 = 50.0;

/// Statistics of the tilted density `p(z) ∝ N(z; μ′, σ′²)·exp(U(z))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedStats {
    pub mean: Vec<f64>,
    /// Weighted mean softmax probability of each spec term's target aspect.
    pub target_prob: Vec<f64>,
    pub mean_u: f64,
    pub ess: f64,
    pub n_samples: usize,
}

/// Self-normalized importance sampling with the prior as proposal.
pub fn snis_oracle(
    prior: &LatentGaussian,
    classifiers: &[LatentClassifier],
    spec: &EnergySpec,
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<TiltedStats> {
    if n_samples < MIN_ORACLE_SAMPLES {
        return Err(Error::Input(format!(
            "oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n_samples}"
        )));
    }
    spec.validate(classifiers)?;
    let mut zs = Vec::with_capacity(n_samples);
    let mut us = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let z = reparameterize(prior, rng);
        us.push(aspect_potential(spec, classifiers, &z)?);
        zs.push(z);
    }
    let max_u = us.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = us.iter().map(|u| (u - max_u).exp()).collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
    if ess < MIN_ESS {
        return Err(Error::OracleDegenerate { ess, min: MIN_ESS });
    }
    let mut mean = vec![0.0; prior.dim()];
    let mut target_prob = vec![0.0; spec.terms.len()];
    let mut mean_u = 0.0;
    for ((z, u), wk) in zs.iter().zip(&us).zip(&w) {
        mean.iter_mut().zip(z).for_each(|(m, v)| *m += wk * v);
        mean_u += wk * u;
        for (p, t) in target_prob.iter_mut().zip(&spec.terms) {
            let probs = softmax(&classifier_for(classifiers, t.attribute)?.logits(z)?);
            *p += wk * probs[t.aspect];
        }
    }
    Ok(TiltedStats {
        mean,
        target_prob,
        mean_u,
        ess,
        n_samples,
    })
}
