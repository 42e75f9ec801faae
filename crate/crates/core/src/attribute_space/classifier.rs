use serde_json::{Map, Value};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::numerics::layers::{affine_backward_into, cross_entropy, tanh_backward};
use crate::numerics::{affine_forward, ParamSet, SeededRng, Tensor2};

const L1_W: &str = "l1.w";
const L1_B: &str = "l1.b";
const OUT_W: &str = "out.w";
const OUT_B: &str = "out.b";

/// Classifier `f_i: z ↦ logits` over the aspects of one attribute. With a
/// hidden width it is `tanh(z·W1 + b1)·W2 + b2`; without, it is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassifier {
    pub attribute: usize,
    latent_dim: usize,
    n_aspects: usize,
    hidden: Option<usize>,
    params: ParamSet,
}

impl LatentClassifier {
    pub fn init(attribute: usize, latent_dim: usize, hidden: Option<usize>, n_aspects: usize, rng: &mut SeededRng) -> Result<Self> {
        if latent_dim == 0 || n_aspects < 2 || hidden == Some(0) {
            return Err(Error::Input(format!(
                "invalid latent classifier shape: latent {latent_dim}, hidden {hidden:?}, aspects {n_aspects}"
            )));
        }
        let mut params = ParamSet::new();
        let out_in = match hidden {
            Some(h) => {
                params.insert(L1_W, rng.init_uniform(latent_dim, h, latent_dim));
                params.insert(L1_B, Tensor2::zeros(1, h));
                h
            }
            None => latent_dim,
        };
        params.insert(OUT_W, rng.init_uniform(out_in, n_aspects, out_in));
        params.insert(OUT_B, Tensor2::zeros(1, n_aspects));
        Ok(LatentClassifier {
            attribute,
            latent_dim,
            n_aspects,
            hidden,
            params,
        })
    }

    pub fn zeros(attribute: usize, latent_dim: usize, hidden: Option<usize>, n_aspects: usize) -> Result<Self> {
        let mut c = Self::init(attribute, latent_dim, hidden, n_aspects, &mut SeededRng::new(0, "zeros"))?;
        c.params.iter_mut().for_each(|(_, t)| t.fill(0.0));
        Ok(c)
    }

    /// Affine classifier with explicit `latent_dim × n_aspects` weights.
    pub fn linear(attribute: usize, w: Tensor2, b: Vec<f64>) -> Result<Self> {
        let (l, n) = w.shape();
        let mut c = Self::zeros(attribute, l, None, n)?;
        if b.len() != n {
            return Err(Error::Dimension {
                op: "linear classifier bias",
                left: (1, b.len()),
                right: (1, n),
            });
        }
        c.params.insert(OUT_W, w);
        c.params.insert(OUT_B, Tensor2::row_vector(b));
        Ok(c)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn n_aspects(&self) -> usize {
        self.n_aspects
    }

    pub fn hidden(&self) -> Option<usize> {
        self.hidden
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn p(&self, name: &str) -> &Tensor2 {
        self.params.get(name).expect("classifier parameter present")
    }

    fn check_z(&self, cols: usize) -> Result<()> {
        if cols != self.latent_dim {
            return Err(Error::Dimension {
                op: "latent classifier input",
                left: (1, cols),
                right: (1, self.latent_dim),
            });
        }
        Ok(())
    }

    /// Raw logits for each row of `z`, plus the hidden activations.
    fn forward(&self, z: &Tensor2) -> Result<(Tensor2, Option<Tensor2>)> {
        self.check_z(z.cols())?;
        match self.hidden {
            Some(_) => {
                let h = affine_forward(z, self.p(L1_W), self.p(L1_B))?.map(f64::tanh);
                Ok((affine_forward(&h, self.p(OUT_W), self.p(OUT_B))?, Some(h)))
            }
            None => Ok((affine_forward(z, self.p(OUT_W), self.p(OUT_B))?, None)),
        }
    }

    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Tensor2::row_vector(z.to_vec()))?.0.into_data())
    }

    pub fn logits_batch(&self, z: &Tensor2) -> Result<Tensor2> {
        Ok(self.forward(z)?.0)
    }

    /// `∇_z Σ_j c_j · f(z)[j]`, accumulated from the per-aspect gradients
    /// so that linear combinations are reproduced exactly.
    pub fn weighted_logit_grad(&self, z: &[f64], coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.n_aspects {
            return Err(Error::Dimension {
                op: "logit coefficients",
                left: (1, coeffs.len()),
                right: (1, self.n_aspects),
            });
        }
        self.check_z(z.len())?;
        let hidden = match self.hidden {
            Some(_) => {
                let zt = Tensor2::row_vector(z.to_vec());
                Some(affine_forward(&zt, self.p(L1_W), self.p(L1_B))?.map(f64::tanh))
            }
            None => None,
        };
        let w_out = self.p(OUT_W);
        let mut acc = vec![0.0; self.latent_dim];
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let col: Vec<f64> = (0..w_out.rows()).map(|r| w_out.get(r, j)).collect();
            let g = match &hidden {
                None => col,
                Some(h) => tanh_backward(h, &Tensor2::row_vector(col))?
                    .matmul_t(self.p(L1_W))?
                    .into_data(),
            };
            acc.iter_mut().zip(&g).for_each(|(a, v)| *a += c * v);
        }
        Ok(acc)
    }

    /// `∇_z f(z)[j]`.
    pub fn logit_grad(&self, z: &[f64], aspect: usize) -> Result<Vec<f64>> {
        if aspect >= self.n_aspects {
            return Err(Error::Range(format!(
                "aspect {aspect} out of range for {} aspects",
                self.n_aspects
            )));
        }
        let mut coeffs = vec![0.0; self.n_aspects];
        coeffs[aspect] = 1.0;
        self.weighted_logit_grad(z, &coeffs)
    }

    /// Mean cross-entropy over the batch and parameter gradients.
    pub fn loss_and_grads(&self, z: &Tensor2, labels: &[usize]) -> Result<(f64, ParamSet)> {
        if labels.len() != z.rows() || labels.is_empty() {
            return Err(Error::Dimension {
                op: "latent classifier labels",
                left: (labels.len(), 1),
                right: (z.rows(), 1),
            });
        }
        let (logits, h) = self.forward(z)?;
        let n = labels.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = Tensor2::zeros(logits.rows(), logits.cols());
        for (r, &y) in labels.iter().enumerate() {
            if y >= self.n_aspects {
                return Err(Error::Range(format!("label {y} out of range")));
            }
            let (l, d) = cross_entropy(logits.row(r), y);
            loss += l / n;
            dlogits.row_mut(r).iter_mut().zip(&d).for_each(|(o, v)| *o = v / n);
        }
        let out_in = h.as_ref().unwrap_or(z);
        let mut grads = ParamSet::new();
        let mut dw = Tensor2::zeros(out_in.cols(), self.n_aspects);
        let mut db = Tensor2::zeros(1, self.n_aspects);
        let dh = affine_backward_into(out_in, self.p(OUT_W), &dlogits, &mut dw, &mut db)?;
        grads.insert(OUT_W, dw);
        grads.insert(OUT_B, db);
        if let Some(h) = &h {
            let dpre = tanh_backward(h, &dh)?;
            let mut dw = Tensor2::zeros(self.latent_dim, h.cols());
            let mut db = Tensor2::zeros(1, h.cols());
            affine_backward_into(z, self.p(L1_W), &dpre, &mut dw, &mut db)?;
            grads.insert(L1_W, dw);
            grads.insert(L1_B, db);
        }
        Ok((loss, grads))
    }

    pub fn to_checkpoint(&self, extra: Map<String, Value>) -> Checkpoint {
        let mut m = Map::new();
        m.insert("kind".into(), "latent_classifier".into());
        m.insert("attribute".into(), self.attribute.into());
        m.insert("latent_dim".into(), self.latent_dim.into());
        m.insert("n_aspects".into(), self.n_aspects.into());
        m.insert("hidden".into(), self.hidden.map_or(Value::Null, Value::from));
        m.extend(extra);
        Checkpoint::new(m, self.params.clone())
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.meta_str("kind")? != "latent_classifier" {
            return Err(Error::Version("checkpoint is not a latent classifier".into()));
        }
        let field = |k: &str| -> Result<usize> {
            ckpt.meta
                .get(k)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| Error::Integrity(format!("meta field {k:?} missing")))
        };
        let hidden = match ckpt.meta.get("hidden") {
            Some(Value::Null) | None => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| Error::Integrity("bad hidden width".into()))? as usize),
        };
        let mut c = Self::zeros(field("attribute")?, field("latent_dim")?, hidden, field("n_aspects")?)?;
        c.params.check_matches(&ckpt.tensors)?;
        if c.params.len() != ckpt.tensors.len() {
            return Err(Error::Integrity("classifier tensors do not match shape".into()));
        }
        c.params = ckpt.tensors;
        Ok(c)
    }
}
