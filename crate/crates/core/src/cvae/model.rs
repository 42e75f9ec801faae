use serde::{Deserialize, Serialize};

use crate::corpus::{BOS, EOS, MAX_RESPONSE_LEN};
use crate::error::{Error, Result};
use crate::numerics::layers::{affine_backward_into, argmax, log_softmax, tanh_backward};
use crate::numerics::{affine_forward, gru_step, gru_step_backward, GruCache, GruGrads, GruWeights};
use crate::numerics::{ParamSet, SeededRng, Tensor2};

/// Separator placed between context and response for the posterior encoder.
pub const SEP: u32 = EOS;
/// Bounds applied to encoder log-variances.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Network dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeArch {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub aspect_counts: Vec<usize>,
    pub max_response_len: usize,
}

impl CvaeArch {
    pub fn new(vocab_size: usize, embed_dim: usize, hidden_dim: usize, latent_dim: usize, aspect_counts: Vec<usize>) -> Self {
        CvaeArch {
            vocab_size,
            embed_dim,
            hidden_dim,
            latent_dim,
            aspect_counts,
            max_response_len: MAX_RESPONSE_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= EOS as usize
            || self.embed_dim == 0
            || self.hidden_dim == 0
            || self.latent_dim == 0
            || self.max_response_len == 0
        {
            return Err(Error::Input(format!("invalid architecture {self:?}")));
        }
        if self.aspect_counts.iter().any(|&n| n < 2) {
            return Err(Error::Schema("every attribute needs at least two aspects".into()));
        }
        Ok(())
    }
}

/// Diagonal Gaussian over the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl LatentGaussian {
    pub fn standard(dim: usize) -> Self {
        LatentGaussian {
            mu: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.log_var.len() {
            return Err(Error::Dimension {
                op: "latent gaussian",
                left: (1, self.mu.len()),
                right: (1, self.log_var.len()),
            });
        }
        if !self.mu.iter().chain(&self.log_var).all(|v| v.is_finite()) {
            return Err(Error::Input("non-finite latent gaussian".into()));
        }
        Ok(())
    }
}

/// Draws `z = μ + exp(½·log σ²) ⊙ ξ` with `ξ ~ N(0, I)`.
pub fn reparameterize(g: &LatentGaussian, rng: &mut SeededRng) -> Vec<f64> {
    let noise: Vec<f64> = (0..g.dim()).map(|_| rng.normal()).collect();
    reparameterize_with(g, &noise)
}

/// Reparameterization with explicit noise.
pub fn reparameterize_with(g: &LatentGaussian, noise: &[f64]) -> Vec<f64> {
    g.mu
        .iter()
        .zip(&g.log_var)
        .zip(noise)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

pub(crate) mod names {
    pub const EMBED: &str = "embed";
    pub const DEC_INIT_W: &str = "dec.init.w";
    pub const DEC_INIT_B: &str = "dec.init.b";
    pub const GRU_WX: &str = "dec.gru.wx";
    pub const GRU_WH: &str = "dec.gru.wh";
    pub const GRU_B: &str = "dec.gru.b";
    pub const OUT_W: &str = "dec.out.w";
    pub const OUT_B: &str = "dec.out.b";

    pub fn enc(prefix: &str, part: &str) -> String {
        format!("{prefix}.{part}")
    }

    pub fn head_w(i: usize) -> String {
        format!("head.{i}.w")
    }

    pub fn head_b(i: usize) -> String {
        format!("head.{i}.b")
    }
}

/// Which encoder to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    Prior,
    Posterior,
}

impl Encoder {
    fn prefix(self) -> &'static str {
        match self {
            Encoder::Prior => "prior",
            Encoder::Posterior => "post",
        }
    }
}

/// The CVAE: shared token embeddings, prior and posterior MLP encoders,
/// a GRU decoder and one linear aspect head per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Cvae {
    pub arch: CvaeArch,
    pub params: ParamSet,
}

impl Cvae {
    /// Random initialization: weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(arch: CvaeArch, rng: &mut SeededRng) -> Result<Self> {
        arch.validate()?;
        let (v, e, h, l) = (arch.vocab_size, arch.embed_dim, arch.hidden_dim, arch.latent_dim);
        let mut p = ParamSet::new();
        p.insert(names::EMBED, rng.init_uniform(v, e, 1));
        for enc in [Encoder::Prior, Encoder::Posterior] {
            let pre = enc.prefix();
            p.insert(names::enc(pre, "l1.w"), rng.init_uniform(e, h, e));
            p.insert(names::enc(pre, "l1.b"), Tensor2::zeros(1, h));
            p.insert(names::enc(pre, "l2.w"), rng.init_uniform(h, 2 * l, h));
            p.insert(names::enc(pre, "l2.b"), Tensor2::zeros(1, 2 * l));
        }
        p.insert(names::DEC_INIT_W, rng.init_uniform(l + e, h, l + e));
        p.insert(names::DEC_INIT_B, Tensor2::zeros(1, h));
        p.insert(names::GRU_WX, rng.init_uniform(e, 3 * h, e));
        p.insert(names::GRU_WH, rng.init_uniform(h, 3 * h, h));
        p.insert(names::GRU_B, Tensor2::zeros(1, 3 * h));
        p.insert(names::OUT_W, rng.init_uniform(h, v, h));
        p.insert(names::OUT_B, Tensor2::zeros(1, v));
        for (i, &n) in arch.aspect_counts.iter().enumerate() {
            p.insert(names::head_w(i), rng.init_uniform(l, n, l));
            p.insert(names::head_b(i), Tensor2::zeros(1, n));
        }
        Ok(Cvae { arch, params: p })
    }

    /// All parameters zero.
    pub fn zeros(arch: CvaeArch) -> Result<Self> {
        let mut m = Cvae::init(arch, &mut SeededRng::new(0, "zeros"))?;
        m.params.iter_mut().for_each(|(_, t)| t.fill(0.0));
        Ok(m)
    }

    pub fn from_params(arch: CvaeArch, params: ParamSet) -> Result<Self> {
        arch.validate()?;
        let reference = Cvae::init(arch.clone(), &mut SeededRng::new(0, "shape"))?;
        if reference.params.len() != params.len() {
            return Err(Error::Input("parameter set does not match architecture".into()));
        }
        reference.params.check_matches(&params)?;
        Ok(Cvae { arch, params })
    }

    pub(crate) fn p(&self, name: &str) -> &Tensor2 {
        self.params.get(name).expect("parameter present by construction")
    }

    pub(crate) fn gru(&self) -> GruWeights<'_> {
        GruWeights {
            wx: self.p(names::GRU_WX),
            wh: self.p(names::GRU_WH),
            b: self.p(names::GRU_B),
        }
    }

    /// `q(z | C, r)` from mean-pooled embeddings of `[C; SEP; r]`.
    pub fn encode_posterior(&self, context: &[u32], response: &[u32]) -> Result<LatentGaussian> {
        if context.is_empty() || response.is_empty() {
            return Err(Error::Input("posterior encoder needs non-empty context and response".into()));
        }
        let seq = posterior_sequence(context, response);
        self.encode_one(Encoder::Posterior, &seq)
    }

    /// `p(z | C)` from mean-pooled context embeddings.
    pub fn encode_prior(&self, context: &[u32]) -> Result<LatentGaussian> {
        if context.is_empty() {
            return Err(Error::Input("prior encoder needs a non-empty context".into()));
        }
        self.encode_one(Encoder::Prior, context)
    }

    fn encode_one(&self, enc: Encoder, seq: &[u32]) -> Result<LatentGaussian> {
        self.check_tokens(seq)?;
        let pooled = pool(self.p(names::EMBED), &[seq]);
        let (mu, lv, _) = encoder_forward(self, enc, &pooled)?;
        Ok(LatentGaussian {
            mu: mu.into_data(),
            log_var: lv.into_data(),
        })
    }

    pub(crate) fn check_tokens(&self, seq: &[u32]) -> Result<()> {
        match seq.iter().find(|&&t| t as usize >= self.arch.vocab_size) {
            Some(t) => Err(Error::Input(format!("token id {t} outside vocabulary"))),
            None => Ok(()),
        }
    }

    /// Mean per-token negative log-likelihood of `response` (EOS included)
    /// under teacher forcing.
    pub fn decode_teacher_forced(&self, context: &[u32], z: &[f64], response: &[u32]) -> Result<f64> {
        if response.is_empty() || response.len() > self.arch.max_response_len {
            return Err(Error::Input(format!(
                "response length {} outside [1, {}]",
                response.len(),
                self.arch.max_response_len
            )));
        }
        self.check_latent(z)?;
        self.check_tokens(context)?;
        self.check_tokens(response)?;
        let ctx = pool(self.p(names::EMBED), &[context]);
        let z = Tensor2::row_vector(z.to_vec());
        Ok(decoder_forward(self, &z, &ctx, &[response], Reduction::TokenMean, false)?.loss)
    }

    /// Greedy decoding: argmax token at each step until EOS or `max_len`.
    pub fn decode_greedy(&self, context: &[u32], z: &[f64], max_len: usize) -> Result<Vec<u32>> {
        self.check_latent(z)?;
        self.check_tokens(context)?;
        let embed = self.p(names::EMBED);
        let ctx = pool(embed, &[context]);
        let init_in = Tensor2::row_vector(z.to_vec()).hcat(&ctx)?;
        let mut h = affine_forward(&init_in, self.p(names::DEC_INIT_W), self.p(names::DEC_INIT_B))?.map(f64::tanh);
        let mut token = BOS;
        let mut out = Vec::new();
        while out.len() < max_len {
            let x = Tensor2::row_vector(embed.row(token as usize).to_vec());
            h = gru_step(&x, &h, self.gru())?.0;
            let logits = affine_forward(&h, self.p(names::OUT_W), self.p(names::OUT_B))?;
            token = argmax(logits.data()) as u32;
            if token == EOS {
                break;
            }
            out.push(token);
        }
        Ok(out)
    }

    /// Aspect-head logits for attribute `i`.
    pub fn head_logits(&self, i: usize, z: &[f64]) -> Result<Vec<f64>> {
        if i >= self.arch.aspect_counts.len() {
            return Err(Error::Schema(format!("attribute index {i} out of range")));
        }
        self.check_latent(z)?;
        let z = Tensor2::row_vector(z.to_vec());
        Ok(affine_forward(&z, self.p(&names::head_w(i)), self.p(&names::head_b(i)))?.into_data())
    }

    pub(crate) fn check_latent(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.arch.latent_dim {
            return Err(Error::Dimension {
                op: "latent",
                left: (1, z.len()),
                right: (1, self.arch.latent_dim),
            });
        }
        Ok(())
    }
}

pub(crate) fn posterior_sequence(context: &[u32], response: &[u32]) -> Vec<u32> {
    let mut seq = Vec::with_capacity(context.len() + response.len() + 1);
    seq.extend_from_slice(context);
    seq.push(SEP);
    seq.extend_from_slice(response);
    seq
}

/// Mean of embedding rows, one output row per sequence.
pub(crate) fn pool<S: AsRef<[u32]>>(embed: &Tensor2, seqs: &[S]) -> Tensor2 {
    let mut out = Tensor2::zeros(seqs.len(), embed.cols());
    for (b, seq) in seqs.iter().enumerate() {
        let seq = seq.as_ref();
        let k = 1.0 / seq.len() as f64;
        let row = out.row_mut(b);
        for &t in seq {
            row.iter_mut()
                .zip(embed.row(t as usize))
                .for_each(|(o, e)| *o += k * e);
        }
    }
    out
}

pub(crate) fn pool_backward<S: AsRef<[u32]>>(dpooled: &Tensor2, seqs: &[S], dembed: &mut Tensor2) {
    for (b, seq) in seqs.iter().enumerate() {
        let seq = seq.as_ref();
        let k = 1.0 / seq.len() as f64;
        let g = dpooled.row(b);
        for &t in seq {
            dembed
                .row_mut(t as usize)
                .iter_mut()
                .zip(g)
                .for_each(|(d, g)| *d += k * g);
        }
    }
}

pub(crate) struct EncoderCache {
    input: Tensor2,
    hidden: Tensor2,
    raw_log_var: Tensor2,
}

/// Two-layer tanh MLP emitting `(μ, clamp(log σ²))`.
pub(crate) fn encoder_forward(model: &Cvae, enc: Encoder, input: &Tensor2) -> Result<(Tensor2, Tensor2, EncoderCache)> {
    let pre = enc.prefix();
    let l = model.arch.latent_dim;
    let hidden = affine_forward(input, model.p(&names::enc(pre, "l1.w")), model.p(&names::enc(pre, "l1.b")))?
        .map(f64::tanh);
    let out = affine_forward(&hidden, model.p(&names::enc(pre, "l2.w")), model.p(&names::enc(pre, "l2.b")))?;
    let mu = out.slice_cols(0, l);
    let raw_log_var = out.slice_cols(l, 2 * l);
    let log_var = raw_log_var.map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
    Ok((
        mu,
        log_var,
        EncoderCache {
            input: input.clone(),
            hidden,
            raw_log_var,
        },
    ))
}

/// Accumulates encoder parameter gradients and returns the input gradient.
pub(crate) fn encoder_backward(
    model: &Cvae,
    enc: Encoder,
    cache: &EncoderCache,
    dmu: &Tensor2,
    dlog_var: &Tensor2,
    grads: &mut ParamSet,
) -> Result<Tensor2> {
    let pre = enc.prefix();
    let mut dlv = dlog_var.clone();
    for (d, raw) in dlv.data_mut().iter_mut().zip(cache.raw_log_var.data()) {
        if !(LOG_VAR_MIN..=LOG_VAR_MAX).contains(raw) {
            *d = 0.0;
        }
    }
    let dout = dmu.hcat(&dlv)?;
    let w2 = names::enc(pre, "l2.w");
    let b2 = names::enc(pre, "l2.b");
    let dhidden = {
        let (dw, db) = two_mut(grads, &w2, &b2);
        affine_backward_into(&cache.hidden, model.p(&w2), &dout, dw, db)?
    };
    let dpre = tanh_backward(&cache.hidden, &dhidden)?;
    let w1 = names::enc(pre, "l1.w");
    let b1 = names::enc(pre, "l1.b");
    let (dw, db) = two_mut(grads, &w1, &b1);
    affine_backward_into(&cache.input, model.p(&w1), &dpre, dw, db)
}

/// Mutable access to two distinct gradient entries.
pub(crate) fn two_mut<'a>(grads: &'a mut ParamSet, a: &str, b: &str) -> (&'a mut Tensor2, &'a mut Tensor2) {
    let mut first = None;
    let mut second = None;
    for (name, t) in grads.iter_mut() {
        if name == a {
            first = Some(t);
        } else if name == b {
            second = Some(t);
        }
    }
    (
        first.expect("gradient entry present"),
        second.expect("gradient entry present"),
    )
}

struct StepCache {
    gru: GruCache,
    h: Tensor2,
    inputs: Vec<u32>,
    /// `∂loss/∂logits`, already weighted.
    dlogits: Tensor2,
}

/// How token NLLs of one response are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Mean over tokens including EOS.
    #[default]
    TokenMean,
    /// Sum over tokens including EOS.
    Sum,
}

/// Teacher-forced decoder pass over a batch.
pub(crate) struct DecoderPass {
    /// Batch mean of per-example reduced token NLL.
    pub loss: f64,
    init_in: Tensor2,
    h0: Tensor2,
    steps: Vec<StepCache>,
}

pub(crate) fn decoder_forward(
    model: &Cvae,
    z: &Tensor2,
    ctx: &Tensor2,
    responses: &[&[u32]],
    reduction: Reduction,
    keep_cache: bool,
) -> Result<DecoderPass> {
    let batch = responses.len();
    if z.rows() != batch || ctx.rows() != batch {
        return Err(Error::Dimension {
            op: "decoder batch",
            left: z.shape(),
            right: ctx.shape(),
        });
    }
    let embed = model.p(names::EMBED);
    let (w_out, b_out) = (model.p(names::OUT_W), model.p(names::OUT_B));
    let init_in = z.hcat(ctx)?;
    let h0 = affine_forward(&init_in, model.p(names::DEC_INIT_W), model.p(names::DEC_INIT_B))?.map(f64::tanh);
    let max_len = responses.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut per_example = vec![0.0; batch];
    let mut steps = Vec::with_capacity(if keep_cache { max_len + 1 } else { 0 });
    let mut h = h0.clone();
    let mut x = Tensor2::zeros(batch, embed.cols());
    for t in 0..=max_len {
        let inputs: Vec<u32> = responses
            .iter()
            .map(|r| match t {
                0 => BOS,
                _ if t - 1 < r.len() => r[t - 1],
                _ => crate::corpus::PAD,
            })
            .collect();
        for (b, &tok) in inputs.iter().enumerate() {
            x.row_mut(b).copy_from_slice(embed.row(tok as usize));
        }
        let (h_next, cache) = gru_step(&x, &h, model.gru())?;
        let logits = affine_forward(&h_next, w_out, b_out)?;
        let mut dlogits = if keep_cache {
            Tensor2::zeros(batch, logits.cols())
        } else {
            Tensor2::zeros(0, 0)
        };
        for (b, r) in responses.iter().enumerate() {
            let target = match t.cmp(&r.len()) {
                std::cmp::Ordering::Less => r[t],
                std::cmp::Ordering::Equal => EOS,
                std::cmp::Ordering::Greater => continue,
            };
            let weight = match reduction {
                Reduction::TokenMean => 1.0 / (r.len() + 1) as f64,
                Reduction::Sum => 1.0,
            };
            let lp = log_softmax(logits.row(b));
            per_example[b] -= weight * lp[target as usize];
            if keep_cache {
                let w = weight / batch as f64;
                let row = dlogits.row_mut(b);
                for (d, l) in row.iter_mut().zip(&lp) {
                    *d = w * l.exp();
                }
                row[target as usize] -= w;
            }
        }
        if keep_cache {
            steps.push(StepCache {
                gru: cache,
                h: h_next.clone(),
                inputs,
                dlogits,
            });
        }
        h = h_next;
    }
    let loss = per_example.iter().sum::<f64>() / batch as f64;
    Ok(DecoderPass {
        loss,
        init_in,
        h0,
        steps,
    })
}

/// Backward pass of [`decoder_forward`]; returns `(dz, dctx)`.
pub(crate) fn decoder_backward(model: &Cvae, pass: &DecoderPass, grads: &mut ParamSet) -> Result<(Tensor2, Tensor2)> {
    let batch = pass.h0.rows();
    let gw = model.gru();
    let mut gru_grads = GruGrads::zeros_for(&gw);
    let mut dembed = Tensor2::zeros(model.arch.vocab_size, model.arch.embed_dim);
    let mut dh = Tensor2::zeros(batch, model.arch.hidden_dim);
    let w_out = model.p(names::OUT_W);
    for step in pass.steps.iter().rev() {
        {
            let (dw, db) = two_mut(grads, names::OUT_W, names::OUT_B);
            let dh_out = affine_backward_into(&step.h, w_out, &step.dlogits, dw, db)?;
            dh.add_scaled(&dh_out, 1.0)?;
        }
        let (dx, dh_prev) = gru_step_backward(&step.gru, gw, &dh, &mut gru_grads)?;
        for (b, &tok) in step.inputs.iter().enumerate() {
            dembed
                .row_mut(tok as usize)
                .iter_mut()
                .zip(dx.row(b))
                .for_each(|(d, g)| *d += g);
        }
        dh = dh_prev;
    }
    grads.accumulate(names::GRU_WX, &gru_grads.wx, 1.0)?;
    grads.accumulate(names::GRU_WH, &gru_grads.wh, 1.0)?;
    grads.accumulate(names::GRU_B, &gru_grads.b, 1.0)?;
    grads.accumulate(names::EMBED, &dembed, 1.0)?;
    let dpre = tanh_backward(&pass.h0, &dh)?;
    let dinit = {
        let (dw, db) = two_mut(grads, names::DEC_INIT_W, names::DEC_INIT_B);
        affine_backward_into(&pass.init_in, model.p(names::DEC_INIT_W), &dpre, dw, db)?
    };
    let l = model.arch.latent_dim;
    Ok((dinit.slice_cols(0, l), dinit.slice_cols(l, dinit.cols())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> CvaeArch {
        CvaeArch::new(12, 5, 6, 4, vec![2, 2])
    }

    #[test]
    fn zero_params_encode_to_bias() {
        let mut m = Cvae::zeros(arch()).unwrap();
        let b = m.params.get_mut("post.l2.b").unwrap();
        for (k, v) in b.data_mut().iter_mut().enumerate() {
            *v = k as f64 * 0.5 - 1.0;
        }
        let a = m.encode_posterior(&[4, 5], &[6]).unwrap();
        let c = m.encode_posterior(&[7, 8, 9], &[10, 11]).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.mu, vec![-1.0, -0.5, 0.0, 0.5]);
        assert_eq!(a.log_var, vec![1.0, 1.5, 2.0, 2.5]);
        let p = m.encode_prior(&[4]).unwrap();
        assert_eq!(p, LatentGaussian::standard(4));
    }

    #[test]
    fn pooled_encoding_ignores_token_order() {
        let m = Cvae::init(arch(), &mut SeededRng::new(3, "init")).unwrap();
        let a = m.encode_posterior(&[4, 5, 6], &[7, 8]).unwrap();
        let b = m.encode_posterior(&[6, 4, 5], &[8, 7]).unwrap();
        for (x, y) in a.mu.iter().zip(&b.mu) {
            assert!((x - y).abs() < 1e-12);
        }
        let p = m.encode_prior(&[4, 5, 6]).unwrap();
        let q = m.encode_prior(&[5, 6, 4]).unwrap();
        for (x, y) in p.log_var.iter().zip(&q.log_var) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let m = Cvae::zeros(arch()).unwrap();
        assert!(matches!(m.encode_posterior(&[], &[4]), Err(Error::Input(_))));
        assert!(matches!(m.encode_posterior(&[4], &[]), Err(Error::Input(_))));
        assert!(matches!(m.encode_prior(&[]), Err(Error::Input(_))));
    }

    #[test]
    fn encodings_are_finite_and_clamped() {
        let mut rng = SeededRng::new(8, "fuzz");
        let mut m = Cvae::init(arch(), &mut rng).unwrap();
        // Blow up the output layers so clamping is exercised.
        for name in ["post.l2.w", "prior.l2.w"] {
            m.params.get_mut(name).unwrap().scale(80.0);
        }
        for _ in 0..1000 {
            let n = 1 + rng.index(8);
            let ctx: Vec<u32> = (0..n).map(|_| rng.index(12) as u32).collect();
            let resp: Vec<u32> = (0..1 + rng.index(5)).map(|_| rng.index(12) as u32).collect();
            for g in [m.encode_posterior(&ctx, &resp).unwrap(), m.encode_prior(&ctx).unwrap()] {
                g.validate().unwrap();
                assert!(g.log_var.iter().all(|v| (LOG_VAR_MIN..=LOG_VAR_MAX).contains(v)));
            }
        }
    }

    #[test]
    fn uniform_output_gives_log_vocab_loss() {
        let mut m = Cvae::init(arch(), &mut SeededRng::new(1, "init")).unwrap();
        m.params.get_mut(names::OUT_W).unwrap().fill(0.0);
        let loss = m.decode_teacher_forced(&[4, 5], &[0.3, -0.2, 0.1, 0.9], &[6, 7, 8]).unwrap();
        assert!((loss - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn overlong_response_rejected() {
        let m = Cvae::zeros(arch()).unwrap();
        let long = vec![4u32; MAX_RESPONSE_LEN + 1];
        assert!(matches!(m.decode_teacher_forced(&[4], &[0.0; 4], &long), Err(Error::Input(_))));
    }

    #[test]
    fn reparameterize_with_zero_noise_is_mean() {
        let g = LatentGaussian {
            mu: vec![1.0, -2.0],
            log_var: vec![3.0, -4.0],
        };
        assert_eq!(reparameterize_with(&g, &[0.0, 0.0]), g.mu);
    }

    #[test]
    fn greedy_is_deterministic_and_bounded() {
        let m = Cvae::init(arch(), &mut SeededRng::new(2, "init")).unwrap();
        let z = [0.5, -0.5, 0.2, 0.0];
        let a = m.decode_greedy(&[4, 5], &z, 6).unwrap();
        assert_eq!(a, m.decode_greedy(&[4, 5], &z, 6).unwrap());
        assert!(a.len() <= 6);
        assert!(m.decode_greedy(&[4, 5], &z, 1).unwrap().len() <= 1);
    }
}
