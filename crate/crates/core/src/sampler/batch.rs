use super::energy::EnergySpec;
use super::ode::{sample_controlled, ControlledSample, SolverConfig};
use crate::attribute_space::LatentClassifier;
use crate::cvae::Cvae;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Samples every `(spec, context)` pair, spec-major. Context `c` draws its
/// starting latent from substream `c` of `seed` under every spec, so specs
/// are compared on identical starts and results do not depend on `workers`.
pub fn sample_grid(
    cvae: &Cvae,
    classifiers: &[LatentClassifier],
    specs: &[EnergySpec],
    contexts: &[Vec<u32>],
    cfg: &SolverConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<ControlledSample>> {
    cfg.validate()?;
    for s in specs {
        s.validate(classifiers)?;
    }
    if workers == 0 {
        return Err(Error::Input("workers must be at least 1".into()));
    }
    let root = SeededRng::new(seed, "sample");
    let n = specs.len() * contexts.len();
    let run = |k: usize| {
        let (spec, ctx) = (&specs[k / contexts.len()], &contexts[k % contexts.len()]);
        sample_controlled(cvae, classifiers, spec, ctx, cfg, &mut root.substream((k % contexts.len()) as u64))
    };
    if workers == 1 || n < 2 {
        return (0..n).map(run).collect();
    }
    let chunk = n.div_ceil(workers);
    let parts: Vec<Result<Vec<ControlledSample>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| {
                let run = &run;
                scope.spawn(move || (start..(start + chunk).min(n)).map(run).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
