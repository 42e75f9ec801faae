use attrflow_core::attribute_space::LatentClassifier;
use attrflow_core::checkpoint::Checkpoint;
use attrflow_core::cvae::{kl_diag_gaussian, LatentGaussian, LOG_VAR_MAX, LOG_VAR_MIN};
use attrflow_core::eval::{distinct_n, sentence_bleu};
use attrflow_core::numerics::{ParamSet, SeededRng, Tensor2};
use attrflow_core::sampler::{aspect_potential, integrate, EnergySpec, SolverConfig};
use proptest::prelude::*;

fn gaussian(dim: usize) -> impl Strategy<Value = LatentGaussian> {
    (
        prop::collection::vec(-3.0f64..3.0, dim),
        prop::collection::vec(LOG_VAR_MIN.max(-4.0)..LOG_VAR_MAX.min(4.0), dim),
    )
        .prop_map(|(mu, log_var)| LatentGaussian { mu, log_var })
}

fn pair() -> impl Strategy<Value = (LatentGaussian, LatentGaussian)> {
    (1usize..8).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kl_is_non_negative((p, q) in pair()) {
        let kl = kl_diag_gaussian(&p, &q).unwrap();
        prop_assert!(kl >= -1e-12, "{kl}");
    }

    #[test]
    fn kl_of_self_is_zero(p in (1usize..8).prop_flat_map(gaussian)) {
        prop_assert_eq!(kl_diag_gaussian(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn distinct_ratios_are_fractions(
        responses in prop::collection::vec(prop::collection::vec(0u8..6, 0..10), 1..12),
        n in 1usize..=3,
    ) {
        let d = distinct_n(&responses, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&d.sentence));
        prop_assert!((0.0..=1.0).contains(&d.corpus));
    }

    #[test]
    fn bleu_of_exact_copy_is_one(tokens in prop::collection::vec(0u16..50, 4..20)) {
        let b = sentence_bleu(&tokens, &[tokens.as_slice()]);
        prop_assert!((b - 1.0).abs() < 1e-12, "{b}");
    }

    #[test]
    fn checkpoint_text_round_trips(
        values in prop::collection::vec(-1e6f64..1e6, 1..24),
        cols in 1usize..4,
    ) {
        let rows = values.len() / cols;
        prop_assume!(rows > 0);
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor2::from_vec(rows, cols, values[..rows * cols].to_vec()).unwrap());
        let ck = Checkpoint::new(Default::default(), ps);
        let text = ck.to_text().unwrap();
        let back = Checkpoint::from_text(&text).unwrap();
        prop_assert_eq!(back.to_text().unwrap(), text);
    }

    #[test]
    fn flow_never_lowers_the_potential(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed, "prop/flow");
        let clf = LatentClassifier::init(0, 3, Some(4), 2, &mut rng).unwrap();
        let spec = EnergySpec::uniform(&[(0, 1)], 1.0);
        let z0 = rng.gaussian(1, 3).into_data();
        let cfg = SolverConfig { steps: 64, ..Default::default() };
        let traj = integrate(&z0, &spec, std::slice::from_ref(&clf), &LatentGaussian::standard(3), &cfg).unwrap();
        let start = aspect_potential(&spec, std::slice::from_ref(&clf), &z0).unwrap();
        let end = aspect_potential(&spec, std::slice::from_ref(&clf), traj.z_final()).unwrap();
        prop_assert!(end >= start - 1e-9, "{start} -> {end}");
    }
}
