use serde::{Deserialize, Serialize};

use super::classifier::LatentClassifier;
use crate::corpus::DialogueExample;
use crate::cvae::{reparameterize_with, Cvae, LatentGaussian};
use crate::error::{Error, Result};
use crate::numerics::layers::argmax;
use crate::numerics::{adamw_update, AdamWConfig, AdamWState, SeededRng, Tensor2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub holdout_fraction: f64,
    /// Encode with the prior encoder over the context alone.
    pub use_prior_encoder: bool,
    /// Null-model control: permute labels before the train/held-out split.
    pub shuffle_labels: bool,
    pub seed: u64,
}

impl Default for LatentClassifierConfig {
    fn default() -> Self {
        LatentClassifierConfig {
            hidden: 32,
            epochs: 25,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 0.01,
            holdout_fraction: 0.1,
            use_prior_encoder: false,
            shuffle_labels: false,
            seed: 0,
        }
    }
}

impl LatentClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Input("classifier sizes must be positive".into()));
        }
        if !(self.lr > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Input("classifier lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Input("holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedLatentClassifiers {
    pub classifiers: Vec<LatentClassifier>,
    /// Per attribute; NaN when no examples were held out.
    pub heldout_accuracy: Vec<f64>,
}

/// Latent distributions for `examples` under the frozen encoder.
pub fn encode_latents(cvae: &Cvae, examples: &[&DialogueExample], use_prior: bool) -> Result<Vec<LatentGaussian>> {
    examples
        .iter()
        .map(|ex| {
            let ctx = ex.context_flat();
            if use_prior {
                cvae.encode_prior(&ctx)
            } else {
                cvae.encode_posterior(&ctx, &ex.response)
            }
        })
        .collect()
}

fn sample_batch(latents: &[&LatentGaussian], rng: &mut SeededRng) -> Tensor2 {
    let dim = latents[0].dim();
    let mut z = Tensor2::zeros(latents.len(), dim);
    for (r, g) in latents.iter().enumerate() {
        let noise: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        z.row_mut(r).copy_from_slice(&reparameterize_with(g, &noise));
    }
    z
}

/// One classifier per attribute, each trained on the examples labeled with
/// that attribute. Latents are redrawn from the encoder distribution every
/// epoch; held-out accuracy uses one fixed draw.
pub fn train_latent_classifiers(
    cvae: &Cvae,
    examples: &[DialogueExample],
    cfg: &LatentClassifierConfig,
) -> Result<TrainedLatentClassifiers> {
    cfg.validate()?;
    let latent_dim = cvae.arch.latent_dim;
    let mut classifiers = Vec::new();
    let mut heldout_accuracy = Vec::new();
    for (attr, &n_aspects) in cvae.arch.aspect_counts.iter().enumerate() {
        let mut rows: Vec<(&DialogueExample, usize)> = examples
            .iter()
            .filter_map(|ex| ex.labels.get(&attr).map(|&j| (ex, j)))
            .collect();
        let mut seen = vec![false; n_aspects];
        for (_, j) in &rows {
            if *j >= n_aspects {
                return Err(Error::Schema(format!("aspect {j} out of range for attribute {attr}")));
            }
            seen[*j] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::Data(format!("attribute {attr} has fewer than two aspects represented")));
        }
        let root = SeededRng::new(cfg.seed, "latent-classifiers").substream(attr as u64);
        root.substream(0).shuffle(&mut rows);
        if cfg.shuffle_labels {
            let mut labels: Vec<usize> = rows.iter().map(|(_, j)| *j).collect();
            root.substream(1).shuffle(&mut labels);
            rows.iter_mut().zip(labels).for_each(|(r, j)| r.1 = j);
        }
        let n_hold = ((rows.len() as f64) * cfg.holdout_fraction).floor() as usize;
        let (train_rows, hold_rows) = rows.split_at(rows.len() - n_hold);
        let train_ex: Vec<&DialogueExample> = train_rows.iter().map(|(e, _)| *e).collect();
        let train_y: Vec<usize> = train_rows.iter().map(|(_, j)| *j).collect();
        let train_lat = encode_latents(cvae, &train_ex, cfg.use_prior_encoder)?;

        let mut clf = LatentClassifier::init(attr, latent_dim, Some(cfg.hidden), n_aspects, &mut root.substream(2))?;
        let mut state = AdamWState::new(clf.params());
        let adam = AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        };
        let mut order: Vec<usize> = (0..train_lat.len()).collect();
        let mut order_rng = root.substream(3);
        let mut noise_rng = root.substream(4);
        let mut step = 0u64;
        for _ in 0..cfg.epochs {
            order_rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let lat: Vec<&LatentGaussian> = chunk.iter().map(|&k| &train_lat[k]).collect();
                let y: Vec<usize> = chunk.iter().map(|&k| train_y[k]).collect();
                let z = sample_batch(&lat, &mut noise_rng);
                let (_, grads) = clf.loss_and_grads(&z, &y)?;
                step += 1;
                adamw_update(clf.params_mut(), &grads, &mut state, step, &adam)?;
            }
        }

        let acc = if hold_rows.is_empty() {
            f64::NAN
        } else {
            let hold_ex: Vec<&DialogueExample> = hold_rows.iter().map(|(e, _)| *e).collect();
            let hold_lat = encode_latents(cvae, &hold_ex, cfg.use_prior_encoder)?;
            let refs: Vec<&LatentGaussian> = hold_lat.iter().collect();
            let z = sample_batch(&refs, &mut root.substream(5));
            let logits = clf.logits_batch(&z)?;
            let hits = hold_rows
                .iter()
                .enumerate()
                .filter(|(r, (_, j))| argmax(logits.row(*r)) == *j)
                .count();
            hits as f64 / hold_rows.len() as f64
        };
        classifiers.push(clf);
        heldout_accuracy.push(acc);
    }
    Ok(TrainedLatentClassifiers {
        classifiers,
        heldout_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::cvae::CvaeArch;

    /// An untrained CVAE whose posterior mean is dominated by a response
    /// token that encodes the aspect.
    fn fixture() -> (Cvae, Vec<DialogueExample>) {
        let mut m = Cvae::init(CvaeArch::new(12, 4, 6, 3, vec![2, 2]), &mut SeededRng::new(0, "i")).unwrap();
        m.params.get_mut("post.l2.b").unwrap().data_mut()[3..].iter_mut().for_each(|v| *v = -6.0);
        let embed = m.params.get_mut("embed").unwrap();
        for t in 8..12 {
            embed.row_mut(t).iter_mut().for_each(|v| *v *= 6.0);
        }
        let mut rng = SeededRng::new(1, "d");
        let ex = (0..400)
            .map(|k| {
                let attr = k % 2;
                let aspect = rng.index(2);
                DialogueExample {
                    context: vec![vec![4 + rng.index(3) as u32]],
                    response: vec![8 + (2 * attr + aspect) as u32],
                    labels: BTreeMap::from([(attr, aspect)]),
                }
            })
            .collect();
        (m, ex)
    }

    #[test]
    fn separable_latents_are_learned() {
        let (m, ex) = fixture();
        let cfg = LatentClassifierConfig {
            epochs: 60,
            lr: 1e-2,
            holdout_fraction: 0.25,
            ..Default::default()
        };
        let out = train_latent_classifiers(&m, &ex, &cfg).unwrap();
        assert_eq!(out.classifiers.len(), 2);
        for acc in &out.heldout_accuracy {
            assert!(*acc >= 0.9, "{acc}");
        }
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let (m, mut ex) = fixture();
        let mut rng = SeededRng::new(9, "more");
        // More held-out data so chance accuracy is measured tightly.
        for k in 0..1600 {
            let attr = k % 2;
            let aspect = rng.index(2);
            ex.push(DialogueExample {
                context: vec![vec![4]],
                response: vec![8 + (2 * attr + aspect) as u32],
                labels: BTreeMap::from([(attr, aspect)]),
            });
        }
        let cfg = LatentClassifierConfig {
            epochs: 5,
            shuffle_labels: true,
            holdout_fraction: 0.5,
            ..Default::default()
        };
        let out = train_latent_classifiers(&m, &ex, &cfg).unwrap();
        for acc in &out.heldout_accuracy {
            assert!((acc - 0.5).abs() <= 0.05, "{acc}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (m, ex) = fixture();
        let cfg = LatentClassifierConfig {
            epochs: 3,
            ..Default::default()
        };
        let a = train_latent_classifiers(&m, &ex, &cfg).unwrap();
        let b = train_latent_classifiers(&m, &ex, &cfg).unwrap();
        assert_eq!(a.classifiers, b.classifiers);
    }

    #[test]
    fn single_aspect_attribute_is_data_error() {
        let (m, mut ex) = fixture();
        for e in &mut ex {
            if let Some(j) = e.labels.get_mut(&1) {
                *j = 0;
            }
        }
        let r = train_latent_classifiers(&m, &ex, &LatentClassifierConfig::default());
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
