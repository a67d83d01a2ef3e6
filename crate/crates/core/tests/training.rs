use crisisclass::checkpoint::{self, CheckpointMeta};
use crisisclass::embedding::{build_matrix, KeyedVectors};
use crisisclass::model::{build_model, Arch, Model, ModelConfig};
use crisisclass::nn::Mode;
use crisisclass::pipeline::{fit, Corpus};
use crisisclass::synth::{separable_corpus, toy_vectors};
use crisisclass::text::{CleanOptions, EncodedExample, TextCleaner};
use crisisclass::train::{train, OptimizerKind, TrainConfig};
use proptest::prelude::*;

fn corpus(total: usize, seed: u64) -> Corpus {
    let tweets = separable_corpus(total, seed);
    Corpus::build(&tweets, &tweets, &TextCleaner::default(), None, 1, 30).unwrap()
}

fn vectors(coverage: f64, seed: u64) -> KeyedVectors {
    let mut kv = KeyedVectors::new(16);
    for (token, v) in toy_vectors(16, coverage, seed) {
        kv.insert(token, v).unwrap();
    }
    kv
}

fn small_config(arch: Arch, fine_tune: bool) -> ModelConfig {
    let mut cfg = ModelConfig::new(arch, 16, fine_tune);
    cfg.num_filters = 8;
    cfg.cnn_hidden = 8;
    cfg.lstm_hidden = 6;
    cfg
}

fn model(arch: Arch, fine_tune: bool, vectors: &KeyedVectors, corpus: &Corpus, seed: u64) -> Model {
    let (matrix, _) = build_matrix(vectors, &corpus.vocab, seed, fine_tune);
    build_model(small_config(arch, fine_tune), matrix, seed).unwrap()
}

fn mean_loss(model: &Model, examples: &[EncodedExample]) -> f64 {
    let seeds = vec![0; examples.len()];
    model.loss_and_grad_seeded(examples, Mode::Infer, &seeds).unwrap().loss
}

#[test]
fn sgd_lowers_the_loss_on_a_separable_set() {
    let data = corpus(40, 3);
    let vectors = vectors(1.0, 4);
    for arch in [Arch::Cnn, Arch::BiLstm] {
        let start = model(arch, false, &vectors, &data, 5);
        let before = mean_loss(&start, &data.train);
        // Halve the step a few times before calling it a failure.
        let mut lr = 1e-3;
        let mut improved = false;
        for _ in 0..4 {
            let cfg = TrainConfig {
                optimizer: OptimizerKind::Sgd,
                learning_rate: lr,
                epochs: 5,
                batch_size: 8,
                seed: 6,
                ..TrainConfig::default()
            };
            let out = train(start.clone(), &data.train, &data.dev, &cfg).unwrap();
            if mean_loss(&out.model, &data.train) < before {
                improved = true;
                break;
            }
            lr /= 2.0;
        }
        assert!(improved, "{arch}: loss never dropped below {before}");
    }
}

#[test]
fn keep_best_returns_the_best_epoch_snapshot() {
    let data = corpus(30, 7);
    let vectors = vectors(1.0, 8);
    let cfg = TrainConfig {
        epochs: 4,
        keep_best: true,
        seed: 9,
        ..TrainConfig::default()
    };
    let out = train(model(Arch::Cnn, true, &vectors, &data, 1), &data.train, &data.dev, &cfg).unwrap();
    assert_eq!(out.history.len(), 4);
    assert_eq!(Some(out.best_epoch), out.history.best_epoch());
    let best = out.best_model.expect("keep_best stores a snapshot");
    let record = &out.history.records[out.best_epoch - 1];
    let f1 = crisisclass::train::macro_f1(&best, &data.dev).unwrap();
    assert_eq!(f1.to_bits(), record.dev_macro_f1.to_bits());

    let cfg = TrainConfig { keep_best: false, ..cfg };
    let out = train(model(Arch::Cnn, true, &vectors, &data, 1), &data.train, &data.dev, &cfg).unwrap();
    assert!(out.best_model.is_none());
}

#[test]
fn checkpoint_files_reload_to_the_same_predictions() {
    let data = corpus(30, 11);
    let vectors = vectors(0.5, 12);
    let dir = tempfile::tempdir().unwrap();
    let meta = CheckpointMeta {
        vocab_hash: "v".repeat(64),
        stopwords_hash: "s".repeat(64),
        clean_options: CleanOptions::default(),
    };
    for arch in [Arch::Cnn, Arch::BiLstm] {
        let cfg = TrainConfig {
            epochs: 2,
            seed: 13,
            ..TrainConfig::default()
        };
        let (out, _) = fit(small_config(arch, true), &vectors, &data, &cfg).unwrap();
        let path = dir.path().join(format!("{arch}.ckpt"));
        checkpoint::save(&path, &out.model, &meta).unwrap();
        let loaded = checkpoint::load(&path).unwrap();
        assert_eq!(loaded.meta, meta);
        for ex in &data.dev {
            let (a, _) = out.model.predict(ex).unwrap();
            let (b, _) = loaded.model.predict(ex).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(checkpoint::to_bytes(&loaded.model, &loaded.meta), std::fs::read(&path).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn history_has_one_finite_record_per_epoch(epochs in 1usize..4, batch in 1usize..12, seed in 0u64..1000) {
        let data = corpus(14, seed);
        let vectors = vectors(1.0, seed);
        let cfg = TrainConfig { epochs, batch_size: batch, seed, ..TrainConfig::default() };
        let out = train(model(Arch::Cnn, false, &vectors, &data, seed), &data.train, &data.dev, &cfg).unwrap();
        prop_assert_eq!(out.history.len(), epochs);
        for (i, r) in out.history.records.iter().enumerate() {
            prop_assert_eq!(r.epoch, i + 1);
            prop_assert!(r.loss.is_finite() && r.loss >= 0.0);
            prop_assert!((0.0..=1.0).contains(&r.train_acc));
            prop_assert!((0.0..=1.0).contains(&r.dev_macro_f1));
        }
        prop_assert_eq!(out.history.to_csv().lines().count(), epochs + 1);
    }
}
