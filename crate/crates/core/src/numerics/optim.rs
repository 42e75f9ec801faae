use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};

/// AdamW hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates, keyed like the parameters.
#[derive(Debug, Clone)]
pub struct AdamWState {
    m: ParamSet,
    v: ParamSet,
}

impl AdamWState {
    pub fn new(params: &ParamSet) -> Self {
        AdamWState {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// Gradient-norm ceiling applied before every optimizer step.
pub const CLIP_NORM: f64 = 5.0;

/// One AdamW step with bias correction (`step_index` starts at 1).
///
/// Decoupled weight decay multiplies each parameter by `1 − lr·wd` before
/// the adaptive update. Parameters with no gradient entry are left alone.
pub fn adamw_update(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamWState,
    step_index: u64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if step_index == 0 {
        return Err(Error::Input("AdamW step index starts at 1".into()));
    }
    params.check_matches(grads)?;
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite gradient for parameter {name:?}"
            )));
        }
    }
    let bc1 = 1.0 - cfg.beta1.powi(step_index as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step_index as i32);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (name, g) in grads.iter() {
        let p = params.get_mut(name)?;
        let m = state.m.get_mut(name)?;
        let v = state.v.get_mut(name)?;
        for (((p, g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p * decay - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor2;

    fn scalar_set(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("p", Tensor2::row_vector(vec![v]));
        p
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor2::row_vector(vec![1.5, -2.0, 0.25]));
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamWState::new(&p);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        for t in 1..=5 {
            adamw_update(&mut p, &g, &mut st, t, &cfg).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_set(1.0);
        let g = scalar_set(1.0);
        let mut st = AdamWState::new(&p);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_update(&mut p, &g, &mut st, 1, &cfg).unwrap();
        assert!((p.get("p").unwrap().get(0, 0) - 0.9).abs() < 1e-7);
    }

    #[test]
    fn decoupled_decay_scales_parameter() {
        let mut p = scalar_set(2.0);
        let g = scalar_set(0.0);
        let mut st = AdamWState::new(&p);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..Default::default()
        };
        adamw_update(&mut p, &g, &mut st, 1, &cfg).unwrap();
        assert_eq!(p.get("p").unwrap().get(0, 0), 2.0 * (1.0 - 0.001));
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_set(1.0);
        let g = scalar_set(f64::NAN);
        let mut st = AdamWState::new(&p);
        let err = adamw_update(&mut p, &g, &mut st, 1, &AdamWConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(ref m) if m.contains("\"p\"")), "{err}");
    }
}
