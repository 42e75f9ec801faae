use attrflow_core::attribute_space::{load_classifiers, save_classifiers, train_latent_classifiers, LatentClassifierConfig};
use attrflow_core::corpus::{build_vocab, builtin_topics, gen_corpus, tokenize, AttributeSchema, CorpusCounts, DialogueExample, Vocab};
use attrflow_core::cvae::{load_cvae, save_cvae, train, CvaeMeta, TrainConfig};
use attrflow_core::sampler::{sample_grid, EnergySpec, SolverConfig};
use attrflow_core::Error;

fn small_corpus() -> (AttributeSchema, Vocab, Vec<DialogueExample>) {
    let schema = AttributeSchema::default();
    let counts = CorpusCounts { train_per_aspect: 12, test_total: 6 };
    let corpus = gen_corpus(&schema, &builtin_topics(), 3, counts).unwrap();
    let docs: Vec<Vec<String>> = corpus
        .train
        .iter()
        .flat_map(|r| r.context.iter().chain(std::iter::once(&r.response)).map(|t| tokenize(t)))
        .collect();
    let vocab = build_vocab(docs.iter(), 500).unwrap();
    let examples = corpus.train.iter().map(|r| r.encode(&schema, &vocab).unwrap()).collect();
    (schema, vocab, examples)
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        latent_dim: 4,
        hidden_dim: 12,
        embed_dim: 8,
        batch_size: 6,
        epochs: 2,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn training_is_reproducible_and_survives_a_checkpoint() {
    let (schema, vocab, examples) = small_corpus();
    let counts = schema.aspect_counts();
    let a = train(&tiny_config(), &examples, vocab.len(), &counts, |_| {}).unwrap();
    let b = train(&tiny_config(), &examples, vocab.len(), &counts, |_| {}).unwrap();
    assert_eq!(a.model.params.flatten(), b.model.params.flatten());
    assert_eq!(a.log.len(), 2);
    assert!(a.log.iter().all(|r| r.total.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cvae.ckpt");
    let meta = CvaeMeta { schema: schema.clone(), vocab_hash: vocab.hash(), extra: Default::default() };
    save_cvae(&a.model, &meta, &path).unwrap();
    let (loaded, loaded_meta) = load_cvae(&path, Some(&schema)).unwrap();
    assert_eq!(loaded.params.flatten(), a.model.params.flatten());
    assert_eq!(loaded_meta.vocab_hash, vocab.hash());

    let ctx = examples[0].context_flat();
    let z = vec![0.3, -0.2, 0.1, 0.0];
    assert_eq!(
        loaded.decode_greedy(&ctx, &z, 12).unwrap(),
        a.model.decode_greedy(&ctx, &z, 12).unwrap()
    );
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let (schema, vocab, examples) = small_corpus();
    let cfg = TrainConfig { epochs: 1, ..tiny_config() };
    let out = train(&cfg, &examples, vocab.len(), &schema.aspect_counts(), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cvae.ckpt");
    let meta = CvaeMeta { schema: schema.clone(), vocab_hash: vocab.hash(), extra: Default::default() };
    save_cvae(&out.model, &meta, &path).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    let at = text.find("\"format_version\"").unwrap();
    let mut bytes = text.into_bytes();
    bytes[at + 1] = b'F';
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(load_cvae(&path, Some(&schema)), Err(Error::Integrity(_))));
}

#[test]
fn sampling_is_identical_across_worker_counts() {
    let (schema, vocab, examples) = small_corpus();
    let model = train(&tiny_config(), &examples, vocab.len(), &schema.aspect_counts(), |_| {}).unwrap().model;
    let lc_cfg = LatentClassifierConfig { hidden: 8, epochs: 3, batch_size: 16, ..Default::default() };
    let trained = train_latent_classifiers(&model, &examples, &lc_cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    save_classifiers(dir.path(), &schema, &trained.classifiers).unwrap();
    let classifiers = load_classifiers(dir.path(), &schema).unwrap();

    let specs = [EnergySpec::uniform(&[(0, 1), (1, 0), (2, 1)], 1.0), EnergySpec::uniform(&[(0, 0)], 1.0)];
    let contexts: Vec<Vec<u32>> = examples.iter().take(5).map(|e| e.context_flat()).collect();
    let cfg = SolverConfig { steps: 20, ..Default::default() };
    let one = sample_grid(&model, &classifiers, &specs, &contexts, &cfg, 5, 1).unwrap();
    let three = sample_grid(&model, &classifiers, &specs, &contexts, &cfg, 5, 3).unwrap();
    assert_eq!(one.len(), specs.len() * contexts.len());
    for (x, y) in one.iter().zip(&three) {
        assert_eq!(x.z_final, y.z_final);
        assert_eq!(x.response, y.response);
    }
    // both specs start each context from the same prior draw
    for c in 0..contexts.len() {
        assert_eq!(one[c].z_start, one[contexts.len() + c].z_start);
    }
    for s in &one {
        assert!(s.u_end >= s.u_start - 1e-9);
    }
}
