use serde::{Deserialize, Serialize};

use super::energy::{aspect_potential, potential_grad, EnergySpec};
use crate::attribute_space::LatentClassifier;
use crate::cvae::{reparameterize, Cvae, LatentGaussian};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// `½β(s)·∇U(z)`.
    Reduced,
    /// `½β(s)·[∇U(z) − ((σ′²−1)⊙z + μ′) ⊘ σ′²]` with the prior `N(μ′, σ′²)`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub steps: usize,
    pub integrator: Integrator,
    pub drift: DriftKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta_min: 0.1,
            beta_max: 20.0,
            steps: 32,
            integrator: Integrator::Rk4,
            drift: DriftKind::Reduced,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_min <= self.beta_max && self.beta_max.is_finite()) {
            return Err(Error::Input(format!(
                "need 0 < beta_min <= beta_max, got {} and {}",
                self.beta_min, self.beta_max
            )));
        }
        if self.steps == 0 {
            return Err(Error::Input("solver needs at least one step".into()));
        }
        Ok(())
    }
}

/// Linear schedule `β(s) = β_min + s·(β_max − β_min)` on pseudo-time `s ∈ [0, 1]`.
pub fn beta(s: f64, cfg: &SolverConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Range(format!("pseudo-time {s} outside [0, 1]")));
    }
    Ok(cfg.beta_min + s * (cfg.beta_max - cfg.beta_min))
}

pub fn drift(
    z: &[f64],
    s: f64,
    spec: &EnergySpec,
    classifiers: &[LatentClassifier],
    prior: &LatentGaussian,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    if prior.dim() != z.len() {
        return Err(Error::Dimension {
            op: "drift",
            left: (1, z.len()),
            right: (1, prior.dim()),
        });
    }
    let half_beta = 0.5 * beta(s, cfg)?;
    let mut g = potential_grad(spec, classifiers, z)?;
    if cfg.drift == DriftKind::Full {
        for (d, gd) in g.iter_mut().enumerate() {
            let var = prior.log_var[d].exp();
            *gd -= ((var - 1.0) * z[d] + prior.mu[d]) / var;
        }
    }
    g.iter_mut().for_each(|v| *v *= half_beta);
    Ok(g)
}

/// States at `s = 0, h, 2h, …, 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn z_final(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the start state")
    }
}

fn axpy(z: &[f64], k: f64, d: &[f64]) -> Vec<f64> {
    z.iter().zip(d).map(|(a, b)| a + k * b).collect()
}

/// Fixed-step integration of `dz/ds = drift(z, s)` over `[0, 1]`.
pub fn integrate(
    z0: &[f64],
    spec: &EnergySpec,
    classifiers: &[LatentClassifier],
    prior: &LatentGaussian,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    spec.validate(classifiers)?;
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite start state".into()));
    }
    let h = 1.0 / cfg.steps as f64;
    let f = |z: &[f64], s: f64| drift(z, s.min(1.0), spec, classifiers, prior, cfg);
    let mut states = Vec::with_capacity(cfg.steps + 1);
    states.push(z0.to_vec());
    let mut z = z0.to_vec();
    for k in 0..cfg.steps {
        let s = k as f64 * h;
        z = match cfg.integrator {
            Integrator::Euler => axpy(&z, h, &f(&z, s)?),
            Integrator::Rk4 => {
                let k1 = f(&z, s)?;
                let k2 = f(&axpy(&z, 0.5 * h, &k1), s + 0.5 * h)?;
                let k3 = f(&axpy(&z, 0.5 * h, &k2), s + 0.5 * h)?;
                let k4 = f(&axpy(&z, h, &k3), s + h)?;
                z.iter()
                    .enumerate()
                    .map(|(d, v)| v + h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]))
                    .collect()
            }
        };
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite latent at solver step {}", k + 1)));
        }
        states.push(z.clone());
    }
    Ok(Trajectory { states })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledSample {
    pub z_start: Vec<f64>,
    pub z_final: Vec<f64>,
    pub u_start: f64,
    pub u_end: f64,
    pub response: Vec<u32>,
}

/// Draws `z0` from the prior over `context`, flows it with the solver and
/// decodes greedily. An empty spec is uncontrolled prior sampling.
pub fn sample_controlled(
    cvae: &Cvae,
    classifiers: &[LatentClassifier],
    spec: &EnergySpec,
    context: &[u32],
    cfg: &SolverConfig,
    rng: &mut SeededRng,
) -> Result<ControlledSample> {
    let prior = cvae.encode_prior(context)?;
    let z0 = reparameterize(&prior, rng);
    let traj = integrate(&z0, spec, classifiers, &prior, cfg)?;
    let z_final = traj.z_final().to_vec();
    let response = cvae.decode_greedy(context, &z_final, cvae.arch.max_response_len)?;
    Ok(ControlledSample {
        u_start: aspect_potential(spec, classifiers, &z0)?,
        u_end: aspect_potential(spec, classifiers, &z_final)?,
        z_start: z0,
        z_final,
        response,
    })
}
