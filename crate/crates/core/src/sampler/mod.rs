//! Energy-based composition of latent classifiers, sampled by integrating a
//! probability-flow ODE in the latent space, plus an importance-sampling
//! oracle for the tilted prior.

mod batch;
mod energy;
mod ode;
mod oracle;

pub use batch::sample_grid;
pub use energy::{aspect_potential, potential_grad, EnergySpec, EnergyTerm};
pub use ode::{
    beta, drift, integrate, sample_controlled, ControlledSample, DriftKind, Integrator, SolverConfig, Trajectory,
};
pub use oracle::{snis_oracle, TiltedStats, MIN_ESS, MIN_ORACLE_SAMPLES};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribute_space::LatentClassifier;
    use crate::cvae::LatentGaussian;
    use crate::error::Error;
    use crate::numerics::layers::softmax;
    use crate::numerics::{SeededRng, Tensor2};

    /// Binary classifier with logits `(w·z, −w·z)`.
    fn signed(attribute: usize, w: &[f64]) -> LatentClassifier {
        let rows: Vec<[f64; 2]> = w.iter().map(|&v| [v, -v]).collect();
        LatentClassifier::linear(attribute, Tensor2::from_rows(&rows).unwrap(), vec![0.0, 0.0]).unwrap()
    }

    fn standard(dim: usize) -> LatentGaussian {
        LatentGaussian::standard(dim)
    }

    #[test]
    fn beta_schedule() {
        let cfg = SolverConfig::default();
        assert_eq!(beta(0.0, &cfg).unwrap(), 0.1);
        assert_eq!(beta(1.0, &cfg).unwrap(), 20.0);
        assert!((beta(0.5, &cfg).unwrap() - 10.05).abs() < 1e-12);
        assert!(matches!(beta(1.5, &cfg), Err(Error::Range(_))));
        assert!(matches!(beta(-0.1, &cfg), Err(Error::Range(_))));
    }

    #[test]
    fn potential_cases() {
        let clfs = vec![
            LatentClassifier::linear(0, Tensor2::zeros(2, 2), vec![2.0, 0.0]).unwrap(),
            LatentClassifier::linear(1, Tensor2::zeros(2, 2), vec![0.0, 3.0]).unwrap(),
        ];
        let z = [0.4, -1.0];
        assert_eq!(aspect_potential(&EnergySpec::empty(), &clfs, &z).unwrap(), 0.0);
        let spec = EnergySpec::uniform(&[(0, 0), (1, 1)], 1.0);
        assert_eq!(aspect_potential(&spec, &clfs, &z).unwrap(), 5.0);

        let mut rng = SeededRng::new(1, "p");
        let mlps: Vec<LatentClassifier> = (0..2)
            .map(|i| LatentClassifier::init(i, 3, Some(8), 2, &mut rng).unwrap())
            .collect();
        let spec = EnergySpec::uniform(&[(0, 1), (1, 0)], 0.7);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let u = aspect_potential(&spec, &mlps, &z).unwrap();
            let u2 = aspect_potential(&spec.scaled(2.0), &mlps, &z).unwrap();
            assert!((u2 - 2.0 * u).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    #[test]
    fn spec_validation() {
        let clfs = vec![signed(0, &[1.0]), signed(1, &[1.0])];
        let dup = EnergySpec::uniform(&[(0, 0), (0, 1)], 1.0);
        assert!(dup.validate(&clfs).is_err());
        let neg = EnergySpec::uniform(&[(0, 0)], -1.0);
        assert!(matches!(neg.validate(&clfs), Err(Error::Range(_))));
        let bad = EnergySpec::uniform(&[(1, 2)], 1.0);
        assert!(matches!(bad.validate(&clfs), Err(Error::Range(_))));
        let schema = crate::corpus::AttributeSchema::default();
        let s = EnergySpec::parse("style=lyrical, mind=emotional", &schema, 1.0).unwrap();
        assert_eq!(s.targets(), vec![(0, 0), (2, 1)]);
        assert!(EnergySpec::parse("style=baroque", &schema, 1.0).is_err());
        assert!(EnergySpec::parse("style", &schema, 1.0).is_err());
    }

    #[test]
    fn drift_cases() {
        let clfs = vec![signed(0, &[1.0, 0.0])];
        let spec = EnergySpec::uniform(&[(0, 0)], 1.0);
        let cfg = SolverConfig::default();
        let d = drift(&[3.0, -2.0], 0.0, &spec, &clfs, &standard(2), &cfg).unwrap();
        assert!((d[0] - 0.05).abs() < 1e-15 && d[1] == 0.0);

        let prior = LatentGaussian {
            mu: vec![0.5, -1.5],
            log_var: vec![0.0, 0.0],
        };
        let full = SolverConfig {
            drift: DriftKind::Full,
            ..cfg
        };
        let z = [0.7, 0.2];
        let s = 0.3;
        let hb = 0.5 * beta(s, &cfg).unwrap();
        let d = drift(&z, s, &spec, &clfs, &prior, &full).unwrap();
        assert!((d[0] - hb * (1.0 - 0.5)).abs() < 1e-12);
        assert!((d[1] - hb * (0.0 + 1.5)).abs() < 1e-12);

        let d = drift(&z, s, &EnergySpec::empty(), &clfs, &prior, &cfg).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_flow_has_closed_form() {
        let clfs = vec![signed(0, &[1.0, 0.0])];
        let spec = EnergySpec::uniform(&[(0, 0)], 1.0);
        let rk4 = SolverConfig {
            steps: 16,
            ..Default::default()
        };
        let t = integrate(&[0.0, 0.0], &spec, &clfs, &standard(2), &rk4).unwrap();
        assert_eq!(t.states.len(), 17);
        assert!((t.z_final()[0] - 5.025).abs() <= 1e-9);
        assert!(t.z_final()[1].abs() <= 1e-9);

        let euler = SolverConfig {
            steps: 10_000,
            integrator: Integrator::Euler,
            ..Default::default()
        };
        let e = integrate(&[0.0, 0.0], &spec, &clfs, &standard(2), &euler).unwrap();
        assert!((e.z_final()[0] - t.z_final()[0]).abs() <= 1e-3);

        let still = integrate(&[0.3, -0.4], &EnergySpec::empty(), &clfs, &standard(2), &rk4).unwrap();
        assert_eq!(still.z_final(), &[0.3, -0.4]);
    }

    #[test]
    fn full_drift_shifts_by_prior_mean() {
        let clfs = vec![signed(0, &[1.0, 0.0])];
        let prior = LatentGaussian {
            mu: vec![1.0, -2.0],
            log_var: vec![0.0, 0.0],
        };
        let cfg = SolverConfig {
            drift: DriftKind::Full,
            ..Default::default()
        };
        let z0 = [0.25, 0.5];
        let full = integrate(&z0, &EnergySpec::empty(), &clfs, &prior, &cfg).unwrap();
        let reduced = integrate(&z0, &EnergySpec::empty(), &clfs, &prior, &SolverConfig::default()).unwrap();
        assert_eq!(reduced.z_final(), &z0);
        for d in 0..2 {
            let moved = full.z_final()[d] - reduced.z_final()[d];
            assert!((moved + 5.025 * prior.mu[d]).abs() < 1e-9, "{moved}");
        }
    }

    #[test]
    fn lambda_scaling_keeps_argmax() {
        let clfs = vec![signed(0, &[1.0, 0.5]), signed(1, &[-0.3, 1.0])];
        let spec = EnergySpec::uniform(&[(0, 1), (1, 0)], 1.0);
        let cfg = SolverConfig::default();
        let mut rng = SeededRng::new(2, "z");
        for _ in 0..20 {
            let z0 = [0.1 * rng.normal(), 0.1 * rng.normal()];
            let base = integrate(&z0, &spec, &clfs, &standard(2), &cfg).unwrap();
            for c in [0.5, 2.0, 4.0] {
                let d0 = drift(&z0, 0.4, &spec, &clfs, &standard(2), &cfg).unwrap();
                let dc = drift(&z0, 0.4, &spec.scaled(c), &clfs, &standard(2), &cfg).unwrap();
                for (a, b) in d0.iter().zip(&dc) {
                    assert!((b - c * a).abs() < 1e-12);
                }
                let scaled = integrate(&z0, &spec.scaled(c), &clfs, &standard(2), &cfg).unwrap();
                for clf in &clfs {
                    let a = crate::numerics::layers::argmax(&clf.logits(base.z_final()).unwrap());
                    let b = crate::numerics::layers::argmax(&clf.logits(scaled.z_final()).unwrap());
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn zero_weight_term_has_no_influence() {
        let mut rng = SeededRng::new(3, "c");
        let clfs: Vec<LatentClassifier> = (0..2)
            .map(|i| LatentClassifier::init(i, 3, Some(8), 2, &mut rng).unwrap())
            .collect();
        let with = EnergySpec {
            terms: vec![
                EnergyTerm {
                    attribute: 0,
                    aspect: 1,
                    weight: 1.0,
                },
                EnergyTerm {
                    attribute: 1,
                    aspect: 0,
                    weight: 0.0,
                },
            ],
        };
        let without = EnergySpec {
            terms: vec![with.terms[0]],
        };
        let z0 = [0.1, 0.2, -0.3];
        let cfg = SolverConfig::default();
        let a = integrate(&z0, &with, &clfs, &standard(3), &cfg).unwrap();
        let b = integrate(&z0, &without, &clfs, &standard(3), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reduced_rk4_ascends() {
        let mut rng = SeededRng::new(4, "c");
        let cfg = SolverConfig::default();
        for _ in 0..20 {
            let clfs: Vec<LatentClassifier> = (0..3)
                .map(|i| LatentClassifier::init(i, 4, Some(16), 2, &mut rng).unwrap())
                .collect();
            let spec = EnergySpec::uniform(&[(0, rng.index(2)), (1, rng.index(2)), (2, rng.index(2))], 1.0);
            let z0: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let t = integrate(&z0, &spec, &clfs, &standard(4), &cfg).unwrap();
            let us: Vec<f64> = t
                .states
                .iter()
                .map(|z| aspect_potential(&spec, &clfs, z).unwrap())
                .collect();
            for w in us.windows(2) {
                assert!(w[1] >= w[0] - 1e-6);
            }
        }
    }

    #[test]
    fn non_finite_start_rejected() {
        let clfs = vec![signed(0, &[1.0])];
        let r = integrate(&[f64::NAN], &EnergySpec::empty(), &clfs, &standard(1), &SolverConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn divergence_reports_step() {
        // A huge weight on a linear logit overflows within a few steps.
        let clfs = vec![signed(0, &[1.0])];
        let spec = EnergySpec::uniform(&[(0, 0)], 1e307);
        let r = integrate(&[0.0], &spec, &clfs, &standard(1), &SolverConfig::default());
        match r {
            Err(Error::Divergence(m)) => assert!(m.contains("step"), "{m}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn oracle_untilted_matches_prior() {
        let clfs = vec![signed(0, &[1.0, 0.0])];
        let prior = LatentGaussian {
            mu: vec![0.5, -1.0],
            log_var: vec![0.0, 2f64.ln()],
        };
        let n = 20_000;
        let stats = snis_oracle(&prior, &clfs, &EnergySpec::empty(), n, &mut SeededRng::new(5, "o")).unwrap();
        assert!((stats.ess - n as f64).abs() < 1e-6 * n as f64);
        for d in 0..2 {
            let sd = prior.log_var[d].exp().sqrt() / (n as f64).sqrt();
            assert!((stats.mean[d] - prior.mu[d]).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn oracle_linear_tilt_is_shifted_gaussian() {
        let clfs = vec![signed(0, &[1.0])];
        let spec = EnergySpec::uniform(&[(0, 0)], 1.0);
        let stats = snis_oracle(&standard(1), &clfs, &spec, 50_000, &mut SeededRng::new(6, "o")).unwrap();
        assert!(stats.ess <= 50_000.0);
        assert!((stats.mean[0] - 1.0).abs() <= 3.0 / stats.ess.sqrt(), "{:?}", stats);
    }

    #[test]
    fn oracle_requires_samples_and_ess() {
        let clfs = vec![signed(0, &[1.0])];
        let spec = EnergySpec::uniform(&[(0, 0)], 1.0);
        assert!(snis_oracle(&standard(1), &clfs, &spec, 10, &mut SeededRng::new(7, "o")).is_err());
        let steep = spec.scaled(60.0);
        let r = snis_oracle(&standard(1), &clfs, &steep, 1000, &mut SeededRng::new(7, "o"));
        assert!(matches!(r, Err(Error::OracleDegenerate { .. })));
    }

    #[test]
    fn flow_concentrates_at_least_as_much_as_tilt() {
        let clfs = vec![signed(0, &[1.0, 0.0]), signed(1, &[0.0, 1.0])];
        let spec = EnergySpec::uniform(&[(0, 0), (1, 0)], 1.0);
        let prior = standard(2);
        let cfg = SolverConfig::default();
        let mut rng = SeededRng::new(8, "s");
        let oracle = snis_oracle(&prior, &clfs, &spec, 50_000, &mut rng).unwrap();
        let (mut flow, mut base) = (vec![0.0; 2], vec![0.0; 2]);
        let n = 500;
        for _ in 0..n {
            let z0 = crate::cvae::reparameterize(&prior, &mut rng);
            let zf = integrate(&z0, &spec, &clfs, &prior, &cfg).unwrap().z_final().to_vec();
            for (i, c) in clfs.iter().enumerate() {
                flow[i] += softmax(&c.logits(&zf).unwrap())[0] / n as f64;
                base[i] += softmax(&c.logits(&z0).unwrap())[0] / n as f64;
            }
        }
        for i in 0..2 {
            assert!(flow[i] >= base[i]);
            assert!(flow[i] >= oracle.target_prob[i] - 0.05, "{} vs {}", flow[i], oracle.target_prob[i]);
        }
    }
}
