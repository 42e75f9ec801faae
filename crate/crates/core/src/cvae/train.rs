use serde::{Deserialize, Serialize};

use super::losses::{kl_weight, KlDirection};
use super::model::{Cvae, CvaeArch, Reduction};
use super::objective::{total_loss, LossParts, ObjectiveConfig};
use crate::corpus::DialogueExample;
use crate::error::{Error, Result};
use crate::numerics::{adamw_update, AdamWConfig, AdamWState, SeededRng, Tensor2, CLIP_NORM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Must be a multiple of the number of attributes.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub kl_cycle_len: u64,
    pub kl_threshold: f64,
    pub kl_direction: KlDirection,
    pub lc_weight: f64,
    pub ld_weight: f64,
    pub recon_reduction: Reduction,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 16,
            hidden_dim: 64,
            embed_dim: 32,
            batch_size: 63,
            epochs: 20,
            lr: 1e-3,
            weight_decay: 0.01,
            kl_cycle_len: 500,
            kl_threshold: 0.9,
            kl_direction: KlDirection::PriorPosterior,
            lc_weight: 1.0,
            ld_weight: 1.0,
            recon_reduction: Reduction::TokenMean,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_attributes: usize) -> Result<()> {
        let sizes = [self.latent_dim, self.hidden_dim, self.embed_dim, self.batch_size, self.epochs];
        if sizes.contains(&0) || self.kl_cycle_len == 0 {
            return Err(Error::Input("training sizes must be positive".into()));
        }
        let reals = [self.lr, self.kl_threshold];
        if reals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Input("lr and kl_threshold must be positive".into()));
        }
        let weights = [self.weight_decay, self.lc_weight, self.ld_weight];
        if weights.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Input("weights must be non-negative".into()));
        }
        if n_attributes == 0 || !self.batch_size.is_multiple_of(n_attributes) {
            return Err(Error::Batching(format!(
                "batch size {} is not divisible by {n_attributes} attributes",
                self.batch_size
            )));
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            kl_threshold: self.kl_threshold,
            kl_direction: self.kl_direction,
            lc_weight: self.lc_weight,
            ld_weight: self.ld_weight,
            recon_reduction: self.recon_reduction,
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }

    pub fn arch(&self, vocab_size: usize, aspect_counts: Vec<usize>) -> CvaeArch {
        CvaeArch::new(vocab_size, self.embed_dim, self.hidden_dim, self.latent_dim, aspect_counts)
    }
}

/// Per-epoch means of the loss terms; `step` is the global step count at
/// the end of the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: u64,
    pub recon: f64,
    pub kl: f64,
    pub kl_weight: f64,
    pub lc: f64,
    pub ld: f64,
    pub total: f64,
}

pub const LOSS_LOG_HEADER: &str = "epoch,step,recon,kl,kl_weight,lc,ld,total";

pub fn loss_log_csv(records: &[LossRecord]) -> String {
    let mut s = String::from(LOSS_LOG_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.epoch, r.step, r.recon, r.kl, r.kl_weight, r.lc, r.ld, r.total
        ));
    }
    s
}

/// Splits example indices into batches holding exactly
/// `batch_size / n_attributes` examples of each attribute. Leftovers beyond
/// the smallest group's capacity are dropped for this epoch.
pub fn stratified_batches(
    examples: &[DialogueExample],
    n_attributes: usize,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<usize>>> {
    if n_attributes == 0 || !batch_size.is_multiple_of(n_attributes) || batch_size == 0 {
        return Err(Error::Batching(format!(
            "batch size {batch_size} is not divisible by {n_attributes} attributes"
        )));
    }
    let quota = batch_size / n_attributes;
    let mut groups = vec![Vec::new(); n_attributes];
    for (k, ex) in examples.iter().enumerate() {
        match ex.single_attribute() {
            Some(a) if a < n_attributes => groups[a].push(k),
            _ => {
                return Err(Error::Data(format!(
                    "training example {k} must carry exactly one known attribute label"
                )))
            }
        }
    }
    let n_batches = groups.iter().map(|g| g.len() / quota).min().unwrap_or(0);
    if n_batches == 0 {
        return Err(Error::Batching(format!(
            "not enough examples for one batch with {quota} per attribute"
        )));
    }
    for g in &mut groups {
        rng.shuffle(g);
    }
    Ok((0..n_batches)
        .map(|b| {
            groups
                .iter()
                .flat_map(|g| g[b * quota..(b + 1) * quota].iter().copied())
                .collect()
        })
        .collect())
}

/// One optimizer step on `batch`. Returns the loss before the update.
pub fn train_step(
    model: &mut Cvae,
    state: &mut AdamWState,
    batch: &[&DialogueExample],
    noise: &Tensor2,
    kl_w: f64,
    objective: &ObjectiveConfig,
    adam: &AdamWConfig,
    step_index: u64,
) -> Result<LossParts> {
    let (parts, mut grads) = total_loss(model, batch, noise, kl_w, objective, true)?;
    grads.clip_global_norm(CLIP_NORM);
    adamw_update(&mut model.params, &grads, state, step_index, adam)?;
    Ok(parts)
}

pub struct TrainOutcome {
    pub model: Cvae,
    pub log: Vec<LossRecord>,
}

/// Full training run. `on_epoch` sees each record as it is produced.
pub fn train(
    cfg: &TrainConfig,
    examples: &[DialogueExample],
    vocab_size: usize,
    aspect_counts: &[usize],
    mut on_epoch: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    let n_attrs = aspect_counts.len();
    cfg.validate(n_attrs)?;
    let arch = cfg.arch(vocab_size, aspect_counts.to_vec());
    let mut model = Cvae::init(arch, &mut SeededRng::new(cfg.seed, "cvae/init"))?;
    let mut state = AdamWState::new(&model.params);
    let batch_rng = SeededRng::new(cfg.seed, "cvae/batches");
    let mut noise_rng = SeededRng::new(cfg.seed, "cvae/noise");
    let (objective, adam) = (cfg.objective(), cfg.adamw());
    let mut step: u64 = 0;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let batches = stratified_batches(examples, n_attrs, cfg.batch_size, &mut batch_rng.substream(epoch as u64))?;
        let mut sum = LossParts::default();
        for idx in &batches {
            let batch: Vec<&DialogueExample> = idx.iter().map(|&k| &examples[k]).collect();
            let noise = noise_rng.gaussian(batch.len(), cfg.latent_dim);
            let kl_w = kl_weight(step, cfg.kl_cycle_len);
            step += 1;
            let parts = train_step(&mut model, &mut state, &batch, &noise, kl_w, &objective, &adam, step)
                .map_err(|e| match e {
                    Error::Divergence(m) => Error::Divergence(format!("epoch {epoch}, step {step}: {m}")),
                    other => other,
                })?;
            sum.recon += parts.recon;
            sum.kl += parts.kl;
            sum.kl_weight += parts.kl_weight;
            sum.lc += parts.lc;
            sum.ld += parts.ld;
            sum.total += parts.total;
        }
        let n = batches.len() as f64;
        let rec = LossRecord {
            epoch,
            step,
            recon: sum.recon / n,
            kl: sum.kl / n,
            kl_weight: sum.kl_weight / n,
            lc: sum.lc / n,
            ld: sum.ld / n,
            total: sum.total / n,
        };
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(TrainOutcome { model, log })
}

/// Fraction of gold response tokens reproduced position-wise by greedy
/// decoding from the posterior mean.
pub fn reconstruction_accuracy(model: &Cvae, examples: &[DialogueExample]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for ex in examples {
        let ctx = ex.context_flat();
        let q = model.encode_posterior(&ctx, &ex.response)?;
        let out = model.decode_greedy(&ctx, &q.mu, model.arch.max_response_len)?;
        total += ex.response.len();
        hit += ex.response.iter().zip(&out).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Err(Error::Input("no examples to score".into()));
    }
    Ok(hit as f64 / total as f64)
}
