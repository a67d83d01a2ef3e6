//! End-to-end glue: labelled tweets and word vectors in, trained model out.

use crate::embedding::{build_matrix, Coverage, KeyedVectors};
use crate::error::{Error, Result};
use crate::hash::mix_seed;
use crate::model::{build_model, ModelConfig};
use crate::text::{build_vocabulary, encode_tweets, EncodedExample, RawTweet, TextCleaner, TokenSeq, Vocabulary};
use crate::train::{train, TrainConfig, TrainOutcome};

/// Seed for the random rows of out-of-vocabulary words.
pub fn embedding_seed(seed: u64) -> u64 {
    mix_seed(&[seed, 1])
}

/// Seed for the initial layer weights.
pub fn init_seed(seed: u64) -> u64 {
    mix_seed(&[seed, 2])
}

/// Encoded train and dev splits over a vocabulary of the train split.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<EncodedExample>,
    pub dev: Vec<EncodedExample>,
}

impl Corpus {
    /// Builds the vocabulary from the cleaned train split unless one is given.
    pub fn build(
        train: &[RawTweet],
        dev: &[RawTweet],
        cleaner: &TextCleaner,
        vocab: Option<Vocabulary>,
        min_count: usize,
        seq_len: usize,
    ) -> Result<Self> {
        if train.iter().chain(dev).any(|t| t.label.is_none()) {
            return Err(Error::InvalidArgument("train and dev tweets must be labelled".into()));
        }
        let vocab = match vocab {
            Some(v) => v,
            None => {
                let tokens: Vec<TokenSeq> = train.iter().map(|t| cleaner.tokens(&t.text)).collect();
                build_vocabulary(&tokens, min_count)?
            }
        };
        Ok(Corpus {
            train: encode_tweets(train, cleaner, &vocab, seq_len),
            dev: encode_tweets(dev, cleaner, &vocab, seq_len),
            vocab,
        })
    }
}

/// Aligns `vectors` with the corpus vocabulary, builds the model and trains
/// it. All randomness derives from `train_cfg.seed`.
pub fn fit(
    config: ModelConfig,
    vectors: &KeyedVectors,
    corpus: &Corpus,
    train_cfg: &TrainConfig,
) -> Result<(TrainOutcome, Coverage)> {
    if vectors.dim() != config.embedding_dim {
        return Err(Error::InvalidArgument(format!(
            "embedding file has dimension {} but the model expects {}",
            vectors.dim(),
            config.embedding_dim
        )));
    }
    let (matrix, coverage) = build_matrix(
        vectors,
        &corpus.vocab,
        embedding_seed(train_cfg.seed),
        config.fine_tune_embeddings,
    );
    let model = build_model(config, matrix, init_seed(train_cfg.seed))?;
    let outcome = train(model, &corpus.train, &corpus.dev, train_cfg)?;
    Ok((outcome, coverage))
}
