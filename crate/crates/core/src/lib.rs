//! Tweet crisis classification: text cleaning, vocabularies, pretrained
//! embeddings, CNN and Bi-LSTM classifiers, training and evaluation.

pub mod checkpoint;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod hash;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod pipeline;
pub mod selfcheck;
pub mod synth;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
