//! The full training objective on a batch, with analytic gradients:
//! `recon + w_kl·max(KL, threshold) + w_c·L_C + w_d·L_D`.

use serde::{Deserialize, Serialize};

use super::losses::{aspect_loss_and_grads, attribute_distance_with_grad, kl_term_grad, KlDirection};
use super::model::{
    decoder_backward, decoder_forward, encoder_backward, encoder_forward, names, pool, pool_backward,
    posterior_sequence, two_mut, Cvae, Encoder, Reduction,
};
use crate::corpus::DialogueExample;
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor2};

/// Weights and switches of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub kl_threshold: f64,
    pub kl_direction: KlDirection,
    pub lc_weight: f64,
    pub ld_weight: f64,
    pub recon_reduction: Reduction,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            kl_threshold: 0.9,
            kl_direction: KlDirection::PriorPosterior,
            lc_weight: 1.0,
            ld_weight: 1.0,
            recon_reduction: Reduction::TokenMean,
        }
    }
}

/// Individual terms of one objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub recon: f64,
    /// Batch-mean KL before the threshold is applied.
    pub kl: f64,
    pub kl_weight: f64,
    pub lc: f64,
    pub ld: f64,
    pub total: f64,
}

impl LossParts {
    /// Recomputes `total` from the other fields.
    pub fn combine(&self, cfg: &ObjectiveConfig) -> f64 {
        self.recon
            + self.kl_weight * self.kl.max(cfg.kl_threshold)
            + cfg.lc_weight * self.lc
            + cfg.ld_weight * self.ld
    }
}

/// Evaluates the objective. `noise` is the `B × latent_dim` standard-normal
/// draw used for reparameterization. Gradients are returned when
/// `with_grads` is set (otherwise an empty set).
pub fn total_loss(
    model: &Cvae,
    batch: &[&DialogueExample],
    noise: &Tensor2,
    kl_weight: f64,
    cfg: &ObjectiveConfig,
    with_grads: bool,
) -> Result<(LossParts, ParamSet)> {
    let bsz = batch.len();
    let l = model.arch.latent_dim;
    if bsz == 0 {
        return Err(Error::Batching("empty batch".into()));
    }
    if noise.shape() != (bsz, l) {
        return Err(Error::Dimension {
            op: "reparameterization noise",
            left: noise.shape(),
            right: (bsz, l),
        });
    }
    let ctx_seqs: Vec<Vec<u32>> = batch.iter().map(|e| e.context_flat()).collect();
    let responses: Vec<&[u32]> = batch.iter().map(|e| e.response.as_slice()).collect();
    for (c, r) in ctx_seqs.iter().zip(&responses) {
        if c.is_empty() || r.is_empty() || r.len() > model.arch.max_response_len {
            return Err(Error::Input("example with empty context or invalid response length".into()));
        }
        model.check_tokens(c)?;
        model.check_tokens(r)?;
    }
    let post_seqs: Vec<Vec<u32>> = ctx_seqs
        .iter()
        .zip(&responses)
        .map(|(c, r)| posterior_sequence(c, r))
        .collect();

    let embed = model.p(names::EMBED);
    let ctx = pool(embed, &ctx_seqs);
    let post_in = pool(embed, &post_seqs);
    let (mu_p, lv_p, cache_p) = encoder_forward(model, Encoder::Prior, &ctx)?;
    let (mu_q, lv_q, cache_q) = encoder_forward(model, Encoder::Posterior, &post_in)?;

    let sigma_q = lv_q.map(|v| (0.5 * v).exp());
    let mut z = mu_q.clone();
    for ((zv, s), e) in z.data_mut().iter_mut().zip(sigma_q.data()).zip(noise.data()) {
        *zv += s * e;
    }

    // KL per example, summed over dimensions.
    let (first, second) = match cfg.kl_direction {
        KlDirection::PriorPosterior => ((&mu_p, &lv_p), (&mu_q, &lv_q)),
        KlDirection::PosteriorPrior => ((&mu_q, &lv_q), (&mu_p, &lv_p)),
    };
    let mut kl_sum = 0.0;
    for k in 0..bsz * l {
        let (mp, vp, mq, vq) = (
            first.0.data()[k],
            first.1.data()[k],
            second.0.data()[k],
            second.1.data()[k],
        );
        let diff = mp - mq;
        kl_sum += 0.5 * (vq - vp) + (vp.exp() + diff * diff) / (2.0 * vq.exp()) - 0.5;
    }
    let kl = kl_sum / bsz as f64;

    let pass = decoder_forward(model, &z, &ctx, &responses, cfg.recon_reduction, with_grads)?;

    let mut lc = 0.0;
    let mut lc_parts = Vec::with_capacity(bsz);
    for (b, ex) in batch.iter().enumerate() {
        let (loss, dz, dheads) = aspect_loss_and_grads(model, z.row(b), &ex.labels)?;
        lc += loss;
        lc_parts.push((dz, dheads));
    }
    lc /= bsz as f64;

    let n_attrs = model.arch.aspect_counts.len();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_attrs];
    for (b, ex) in batch.iter().enumerate() {
        for &i in ex.labels.keys() {
            if i < n_attrs {
                groups[i].push(b);
            }
        }
    }
    let (ld, ld_grads) = if cfg.ld_weight != 0.0 {
        if let Some(a) = groups.iter().position(Vec::is_empty) {
            return Err(Error::Batching(format!("batch has no example labeled with attribute {a}")));
        }
        let means: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| {
                let mut m = vec![0.0; l];
                for &b in g {
                    m.iter_mut().zip(z.row(b)).for_each(|(a, v)| *a += v);
                }
                m.iter_mut().for_each(|a| *a /= g.len() as f64);
                m
            })
            .collect();
        attribute_distance_with_grad(&means)?
    } else {
        (0.0, Vec::new())
    };

    let mut parts = LossParts {
        recon: pass.loss,
        kl,
        kl_weight,
        lc,
        ld,
        total: 0.0,
    };
    parts.total = parts.combine(cfg);
    if !parts.total.is_finite() {
        return Err(Error::Divergence(format!("non-finite loss {parts:?}")));
    }
    if !with_grads {
        return Ok((parts, ParamSet::new()));
    }

    let mut grads = model.params.zeros_like();
    let (mut dz, dctx_dec) = decoder_backward(model, &pass, &mut grads)?;

    let kc = cfg.lc_weight / bsz as f64;
    if kc != 0.0 {
        for (b, (dzb, dheads)) in lc_parts.iter().enumerate() {
            dz.row_mut(b).iter_mut().zip(dzb).for_each(|(d, g)| *d += kc * g);
            for (i, dlogits) in dheads {
                let zrow = Tensor2::row_vector(z.row(b).to_vec());
                let dl = Tensor2::row_vector(dlogits.iter().map(|v| kc * v).collect());
                let (dw, db) = two_mut(&mut grads, &names::head_w(*i), &names::head_b(*i));
                dw.add_scaled(&zrow.t_matmul(&dl)?, 1.0)?;
                db.add_scaled(&dl, 1.0)?;
            }
        }
    }
    if cfg.ld_weight != 0.0 {
        for (g, members) in ld_grads.iter().zip(&groups) {
            let k = cfg.ld_weight / members.len() as f64;
            for &b in members {
                dz.row_mut(b).iter_mut().zip(g).for_each(|(d, v)| *d += k * v);
            }
        }
    }

    let mut dmu_q = dz.clone();
    let mut dlv_q = Tensor2::zeros(bsz, l);
    for k in 0..bsz * l {
        dlv_q.data_mut()[k] = dz.data()[k] * noise.data()[k] * 0.5 * sigma_q.data()[k];
    }
    let mut dmu_p = Tensor2::zeros(bsz, l);
    let mut dlv_p = Tensor2::zeros(bsz, l);
    if kl_weight != 0.0 && kl > cfg.kl_threshold {
        let c = kl_weight / bsz as f64;
        for k in 0..bsz * l {
            let g = kl_term_grad(
                first.0.data()[k],
                first.1.data()[k],
                second.0.data()[k],
                second.1.data()[k],
            );
            let (gp_mu, gp_lv, gq_mu, gq_lv) = match cfg.kl_direction {
                KlDirection::PriorPosterior => (g[0], g[1], g[2], g[3]),
                KlDirection::PosteriorPrior => (g[2], g[3], g[0], g[1]),
            };
            dmu_p.data_mut()[k] += c * gp_mu;
            dlv_p.data_mut()[k] += c * gp_lv;
            dmu_q.data_mut()[k] += c * gq_mu;
            dlv_q.data_mut()[k] += c * gq_lv;
        }
    }

    let dctx_prior = encoder_backward(model, Encoder::Prior, &cache_p, &dmu_p, &dlv_p, &mut grads)?;
    let dpost = encoder_backward(model, Encoder::Posterior, &cache_q, &dmu_q, &dlv_q, &mut grads)?;
    let dctx = dctx_dec.add(&dctx_prior)?;
    let dembed = grads.get_mut(names::EMBED)?;
    pool_backward(&dctx, &ctx_seqs, dembed);
    pool_backward(&dpost, &post_seqs, dembed);
    Ok((parts, grads))
}
