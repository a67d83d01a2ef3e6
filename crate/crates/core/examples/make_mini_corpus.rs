//! Regenerates the bundled synthetic corpus and toy embeddings.
//!
//! ```text
//! cargo run -p crisisclass --example make_mini_corpus -- crates/core/data/mini
//! ```

use std::path::PathBuf;

use crisisclass::eval::{write_dataset, ClassScheme};
use crisisclass::synth::{
    crisis_corpus, proportional_counts, separable_corpus, toy_vectors, vectors_to_text, CRISISNLP_DEV_COUNTS,
    CRISISNLP_TEST_COUNTS, CRISISNLP_TRAIN_COUNTS,
};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/data/mini".into()));
    std::fs::create_dir_all(&dir)?;
    let scheme = ClassScheme::crisis();
    let splits = [
        ("train", &CRISISNLP_TRAIN_COUNTS, 500, 101),
        ("dev", &CRISISNLP_DEV_COUNTS, 100, 102),
        ("test", &CRISISNLP_TEST_COUNTS, 100, 103),
    ];
    for (name, weights, total, seed) in splits {
        let counts = proportional_counts(weights, total);
        let tweets = crisis_corpus(&counts, name, seed);
        std::fs::write(dir.join(format!("{name}.tsv")), write_dataset(&tweets, &scheme))?;
    }
    std::fs::write(dir.join("separable.tsv"), write_dataset(&separable_corpus(50, 104), &scheme))?;
    std::fs::write(
        dir.join("general_50d.txt"),
        vectors_to_text(&toy_vectors(50, 0.7, 105), false),
    )?;
    std::fs::write(
        dir.join("domain_50d.vec"),
        vectors_to_text(&toy_vectors(50, 1.0, 106), true),
    )?;
    Ok(())
}
