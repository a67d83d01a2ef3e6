use crisisclass::embedding::{load_embeddings, EmbeddingFormat};
use crisisclass::eval::{load_dataset, write_dataset, ClassScheme};
use crisisclass::synth::{crisis_corpus, toy_vectors, vectors_to_text};
use crisisclass::text::{encode_tweets, RawTweet, TextCleaner, Vocabulary, PAD, UNK};
use crisisclass::Error;
use proptest::prelude::*;

#[test]
fn both_vector_layouts_load_the_same_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = toy_vectors(12, 0.8, 1);
    for (name, header, format) in [
        ("plain.txt", false, EmbeddingFormat::Headerless),
        ("counted.vec", true, EmbeddingFormat::Headered),
    ] {
        let path = dir.path().join(name);
        std::fs::write(&path, vectors_to_text(&table, header)).unwrap();
        let kv = load_embeddings(&path, format).unwrap();
        assert_eq!((kv.dim(), kv.len()), (12, table.len()));
        for (token, v) in &table {
            // The text layout keeps six decimals.
            let got = kv.get(token).unwrap();
            assert!(got.iter().zip(v).all(|(a, b)| (a - b).abs() <= 5e-7 + 1e-15), "{token}");
        }
    }
}

#[test]
fn a_header_count_that_disagrees_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.vec");
    std::fs::write(&path, "3 2\na 1 2\nb 3 4\n").unwrap();
    assert!(load_embeddings(&path, EmbeddingFormat::Headered).is_err());
    std::fs::write(&path, "a 1 2\nb 3\n").unwrap();
    assert!(load_embeddings(&path, EmbeddingFormat::Headerless).is_err());
}

#[test]
fn unknown_labels_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tsv");
    std::fs::write(&path, "id\ttext\tlabel\n1\tbridge down\tinjured_or_dead_people\n2\tok\tweather\n").unwrap();
    match load_dataset(&path, &ClassScheme::crisis()) {
        Err(e @ Error::UnknownLabel { .. }) => assert!(e.to_string().contains(":3"), "{e}"),
        other => panic!("expected an unknown-label error, got {other:?}"),
    }
}

#[test]
fn encoding_pads_truncates_and_maps_unknowns() {
    let cleaner = TextCleaner::default();
    let tweets = vec![
        RawTweet {
            id: "a".into(),
            text: "flood water rising near the bridge".into(),
            label: Some(2),
        },
        RawTweet {
            id: "b".into(),
            text: "@user http://t.co/x".into(),
            label: None,
        },
    ];
    let mut vocab = Vocabulary::empty();
    vocab.insert("flood");
    vocab.insert("water");
    let encoded = encode_tweets(&tweets, &cleaner, &vocab, 3);
    assert_eq!(encoded[0].indices.len(), 3);
    assert_eq!(encoded[0].true_length, 3);
    assert_eq!(encoded[0].label, 2);
    assert_eq!(encoded[0].indices[2], UNK);
    assert_eq!(encoded[1].label, 0);
    assert!(encoded[1].indices[encoded[1].true_length..].iter().all(|&i| i == PAD));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn datasets_survive_a_write_read_cycle(counts in proptest::collection::vec(0usize..6, 7), seed in 0u64..10_000) {
        let scheme = ClassScheme::crisis();
        let tweets = crisis_corpus(&counts, "p", seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        std::fs::write(&path, write_dataset(&tweets, &scheme)).unwrap();
        let data = load_dataset(&path, &scheme).unwrap();
        prop_assert_eq!(&data.tweets, &tweets);
        prop_assert_eq!(data.class_counts, counts);
    }
}
