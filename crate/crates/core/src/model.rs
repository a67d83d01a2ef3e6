//! The CNN and Bi-LSTM tweet classifiers.
//!
//! ```text
//! CNN:     lookup → dropout → conv1d+relu → maxpool → flatten → dense+relu → dropout → dense
//! Bi-LSTM: lookup → dropout → [h_fw ; h_bw] final states      →               dropout → dense
//! ```
//!
//! Logits are pre-softmax. Each example is processed on its own and batch
//! gradients are summed in example order, so results do not depend on how a
//! batch is scheduled.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{EmbeddingGrad, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::nn::{
    bilstm_forward, dropout, maxpool1d, softmax, Activation, BiLstmCache, Conv1d, Conv1dCache, Dense, DenseCache,
    DropoutMask, LstmParams, MaxPoolCache, Mode, Params,
};
use crate::tensor::Tensor;
use crate::text::EncodedExample;

pub const NUM_CLASSES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Cnn,
    BiLstm,
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Arch::Cnn),
            "bilstm" => Ok(Arch::BiLstm),
            other => Err(Error::InvalidArgument(format!(
                "architecture must be `cnn` or `bilstm`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Cnn => "cnn",
            Arch::BiLstm => "bilstm",
        })
    }
}

/// CNN pooling variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// Windows of `pool_size`, then flatten.
    Local,
    /// One max per filter over the whole sequence.
    Global,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Pooling::Local),
            "global" => Ok(Pooling::Global),
            other => Err(Error::InvalidArgument(format!(
                "pooling must be `local` or `global`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Local => "local",
            Pooling::Global => "global",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arch: Arch,
    pub seq_len: usize,
    pub embedding_dim: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub num_filters: usize,
    pub cnn_hidden: usize,
    pub lstm_hidden: usize,
    pub num_classes: usize,
    pub keep_prob: f64,
    pub fine_tune_embeddings: bool,
    pub pooling: Pooling,
}

impl ModelConfig {
    /// Defaults: kernel 3, pool 2, 250 filters, hidden 128 (CNN), hidden 100
    /// (Bi-LSTM), 7 classes, sequence length 30, keep probability 0.5.
    pub fn new(arch: Arch, embedding_dim: usize, fine_tune_embeddings: bool) -> Self {
        ModelConfig {
            arch,
            seq_len: crate::text::DEFAULT_SEQ_LEN,
            embedding_dim,
            kernel_size: 3,
            pool_size: 2,
            num_filters: 250,
            cnn_hidden: 128,
            lstm_hidden: 100,
            num_classes: NUM_CLASSES,
            keep_prob: 0.5,
            fine_tune_embeddings,
            pooling: Pooling::Local,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("seq_len", self.seq_len),
            ("embedding_dim", self.embedding_dim),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("num_filters", self.num_filters),
            ("cnn_hidden", self.cnn_hidden),
            ("lstm_hidden", self.lstm_hidden),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "keep_prob must be in (0, 1], got {}",
                self.keep_prob
            )));
        }
        if self.arch == Arch::Cnn && self.conv_steps() < self.pool_window() {
            return Err(Error::InvalidArgument(format!(
                "seq_len {} too short for kernel {} and pool {}",
                self.seq_len, self.kernel_size, self.pool_size
            )));
        }
        Ok(())
    }

    /// Rows produced by the convolution.
    pub fn conv_steps(&self) -> usize {
        (self.seq_len + 1).saturating_sub(self.kernel_size)
    }

    fn pool_window(&self) -> usize {
        match self.pooling {
            Pooling::Local => self.pool_size,
            Pooling::Global => self.conv_steps(),
        }
    }

    /// Width of the flattened pooled feature map fed to the hidden layer.
    pub fn flatten_width(&self) -> usize {
        (self.conv_steps() / self.pool_window()) * self.num_filters
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnLayers {
    pub conv: Conv1d,
    pub hidden: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayers {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub output: Dense,
}

/// Trainable layer weights other than the embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum Layers {
    Cnn(CnnLayers),
    BiLstm(BiLstmLayers),
}

fn prefixed<'a, T>(prefix: &str, items: Vec<(String, T)>) -> impl Iterator<Item = (String, T)> + 'a
where
    T: 'a,
{
    let prefix = prefix.to_owned();
    items.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

impl Params for Layers {
    fn params(&self) -> Vec<(String, &Tensor)> {
        match self {
            Layers::Cnn(l) => prefixed("conv", l.conv.params())
                .chain(prefixed("hidden", l.hidden.params()))
                .chain(prefixed("output", l.output.params()))
                .collect(),
            Layers::BiLstm(l) => prefixed("lstm_fw", l.forward.params())
                .chain(prefixed("lstm_bw", l.backward.params()))
                .chain(prefixed("output", l.output.params()))
                .collect(),
        }
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            Layers::Cnn(l) => prefixed("conv", l.conv.params_mut())
                .chain(prefixed("hidden", l.hidden.params_mut()))
                .chain(prefixed("output", l.output.params_mut()))
                .collect(),
            Layers::BiLstm(l) => prefixed("lstm_fw", l.forward.params_mut())
                .chain(prefixed("lstm_bw", l.backward.params_mut()))
                .chain(prefixed("output", l.output.params_mut()))
                .collect(),
        }
    }
}

impl Layers {
    fn output(&self) -> &Dense {
        match self {
            Layers::Cnn(l) => &l.output,
            Layers::BiLstm(l) => &l.output,
        }
    }

    fn output_mut(&mut self) -> &mut Dense {
        match self {
            Layers::Cnn(l) => &mut l.output,
            Layers::BiLstm(l) => &mut l.output,
        }
    }

    /// Expected `(name, shape)` list for `config`.
    pub fn shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        Layers::zeros(config)
            .params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect()
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config;
        match c.arch {
            Arch::Cnn => Layers::Cnn(CnnLayers {
                conv: Conv1d::zeros(c.num_filters, c.kernel_size, c.embedding_dim),
                hidden: Dense::zeros(c.flatten_width(), c.cnn_hidden),
                output: Dense::zeros(c.cnn_hidden, c.num_classes),
            }),
            Arch::BiLstm => Layers::BiLstm(BiLstmLayers {
                forward: LstmParams::zeros(c.embedding_dim, c.lstm_hidden),
                backward: LstmParams::zeros(c.embedding_dim, c.lstm_hidden),
                output: Dense::zeros(2 * c.lstm_hidden, c.num_classes),
            }),
        }
    }

    fn glorot(config: &ModelConfig, seed: u64) -> Self {
        let c = config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match c.arch {
            Arch::Cnn => Layers::Cnn(CnnLayers {
                conv: Conv1d::glorot(c.num_filters, c.kernel_size, c.embedding_dim, &mut rng),
                hidden: Dense::glorot(c.flatten_width(), c.cnn_hidden, &mut rng),
                output: Dense::glorot(c.cnn_hidden, c.num_classes, &mut rng),
            }),
            Arch::BiLstm => Layers::BiLstm(BiLstmLayers {
                forward: LstmParams::glorot(c.embedding_dim, c.lstm_hidden, &mut rng),
                backward: LstmParams::glorot(c.embedding_dim, c.lstm_hidden, &mut rng),
                output: Dense::glorot(2 * c.lstm_hidden, c.num_classes, &mut rng),
            }),
        }
    }
}

/// Gradients of a batch loss with respect to a [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Layers,
    /// Empty when the embedding is frozen.
    pub embedding: EmbeddingGrad,
}

impl Gradients {
    pub fn zeros_for(model: &Model) -> Self {
        Gradients {
            layers: model.layers.zeroed(),
            embedding: EmbeddingGrad::default(),
        }
    }

    /// Euclidean norm over all layer and embedding gradients.
    pub fn global_norm(&self) -> f64 {
        let layers: f64 = self.layers.params().iter().map(|(_, t)| t.sum_squares()).sum();
        let emb: f64 = self
            .embedding
            .rows()
            .map(|(_, r)| r.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (layers + emb).sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.layers.params_mut() {
            t.scale(factor);
        }
        for (_, row) in self.embedding.rows_mut() {
            row.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug)]
enum BodyTrace {
    Cnn {
        conv: Conv1dCache,
        pool: MaxPoolCache,
        pooled_shape: Vec<usize>,
        hidden: DenseCache,
    },
    BiLstm {
        lstm: BiLstmCache,
    },
}

/// What one example's forward pass keeps for its backward pass.
#[derive(Debug)]
pub struct Trace {
    indices: Vec<usize>,
    embed_mask: DropoutMask,
    body: BodyTrace,
    head_mask: DropoutMask,
    output: DenseCache,
}

/// Loss, logits and summed gradients of one batch.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    pub logits: Tensor,
    pub grads: Gradients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    embedding: EmbeddingMatrix,
    layers: Layers,
}

/// Glorot-uniform weights from `seed`, zero biases, LSTM forget bias 1.0.
/// The embedding is trainable iff `config.fine_tune_embeddings`.
pub fn build_model(config: ModelConfig, mut embedding: EmbeddingMatrix, seed: u64) -> Result<Model> {
    config.validate()?;
    if embedding.dim() != config.embedding_dim {
        return Err(Error::shape(
            "build_model",
            format!(
                "embedding dimension {} but config expects {}",
                embedding.dim(),
                config.embedding_dim
            ),
        ));
    }
    embedding.set_trainable(config.fine_tune_embeddings);
    let layers = Layers::glorot(&config, seed);
    Ok(Model {
        config,
        embedding,
        layers,
    })
}

impl Model {
    /// Assembles a model from existing weights, checking every shape.
    pub fn from_parts(config: ModelConfig, mut embedding: EmbeddingMatrix, layers: Layers) -> Result<Self> {
        config.validate()?;
        if embedding.dim() != config.embedding_dim {
            return Err(Error::shape("model", "embedding dimension does not match config"));
        }
        let expected = Layers::shapes(&config);
        let actual: Vec<(String, Vec<usize>)> = layers
            .params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected != actual {
            return Err(Error::shape("model", "layer shapes do not match config"));
        }
        embedding.set_trainable(config.fine_tune_embeddings);
        Ok(Model {
            config,
            embedding,
            layers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut EmbeddingMatrix {
        &mut self.embedding
    }

    pub fn layers(&self) -> &Layers {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut Layers {
        &mut self.layers
    }

    /// Layer weights and the embedding matrix, borrowed together.
    pub fn split_mut(&mut self) -> (&mut Layers, &mut Tensor) {
        (&mut self.layers, self.embedding.matrix_mut())
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.output()
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense {
        self.layers.output_mut()
    }

    /// Forward pass of a single example. `seed` drives the dropout masks in
    /// train mode and is ignored in infer mode.
    pub fn forward_example(&self, example: &EncodedExample, mode: Mode, seed: u64) -> Result<(Vec<f64>, Trace)> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedded = self.embedding.lookup(&example.indices)?;
        let (x, embed_mask) = dropout(&embedded, cfg.keep_prob, mode, &mut rng)?;
        let (features, body) = match &self.layers {
            Layers::Cnn(l) => {
                let (conv_out, conv) = l.conv.forward(&x, Activation::Relu)?;
                let window = match cfg.pooling {
                    Pooling::Local => cfg.pool_size,
                    Pooling::Global => conv_out.rows(),
                };
                let (pooled, pool) = maxpool1d(&conv_out, window)?;
                let pooled_shape = pooled.shape().to_vec();
                let flat = pooled.reshape(vec![1, cfg.flatten_width()])?;
                let (h, hidden) = l.hidden.forward(&flat, Activation::Relu)?;
                (
                    h,
                    BodyTrace::Cnn {
                        conv,
                        pool,
                        pooled_shape,
                        hidden,
                    },
                )
            }
            Layers::BiLstm(l) => {
                // An empty tweet still consumes one (PAD) position.
                let len = example.true_length.clamp(1, example.indices.len());
                let (v, lstm) = bilstm_forward(&x, len, &l.forward, &l.backward)?;
                (Tensor::new(vec![1, v.len()], v)?, BodyTrace::BiLstm { lstm })
            }
        };
        let (features, head_mask) = dropout(&features, cfg.keep_prob, mode, &mut rng)?;
        let (logits, output) = self.layers.output().forward(&features, Activation::Identity)?;
        let trace = Trace {
            indices: example.indices.clone(),
            embed_mask,
            body,
            head_mask,
            output,
        };
        Ok((logits.into_data(), trace))
    }

    /// Backward pass of one example, adding into `grads`.
    pub fn backward_example(&self, trace: &Trace, grad_logits: &[f64], grads: &mut Gradients) -> Result<()> {
        let need_embed = self.embedding.trainable();
        let upstream = Tensor::new(vec![1, grad_logits.len()], grad_logits.to_vec())?;
        let g = self
            .layers
            .output()
            .backward_into(&trace.output, &upstream, grads.layers.output_mut(), true)?
            .expect("input gradient requested");
        let g = trace.head_mask.backward(&g)?;
        let g_embedded = match (&self.layers, &mut grads.layers, &trace.body) {
            (
                Layers::Cnn(l),
                Layers::Cnn(gl),
                BodyTrace::Cnn {
                    conv,
                    pool,
                    pooled_shape,
                    hidden,
                },
            ) => {
                let g = l
                    .hidden
                    .backward_into(hidden, &g, &mut gl.hidden, true)?
                    .expect("input gradient requested");
                let g = pool.backward(&g.reshape(pooled_shape.clone())?)?;
                l.conv.backward_into(conv, &g, &mut gl.conv, need_embed)?
            }
            (Layers::BiLstm(l), Layers::BiLstm(gl), BodyTrace::BiLstm { lstm }) => lstm.backward(
                &l.forward,
                &l.backward,
                g.data(),
                &mut gl.forward,
                &mut gl.backward,
                need_embed,
            )?,
            _ => return Err(Error::shape("backward", "trace does not match architecture")),
        };
        if let Some(g) = g_embedded {
            let g = trace.embed_mask.backward(&g)?;
            self.embedding.accumulate_grad(&trace.indices, &g, &mut grads.embedding)?;
        }
        Ok(())
    }

    /// Logits for a batch (`N × C`). In train mode one seed per example is
    /// drawn from `rng`; infer mode never touches `rng`.
    pub fn forward<R: Rng + ?Sized>(&self, batch: &[EncodedExample], mode: Mode, rng: &mut R) -> Result<Tensor> {
        let seeds = self.dropout_seeds(batch.len(), mode, rng);
        let mut data = Vec::with_capacity(batch.len() * self.config.num_classes);
        for (ex, &seed) in batch.iter().zip(&seeds) {
            data.extend(self.forward_example(ex, mode, seed)?.0);
        }
        Tensor::new(vec![batch.len(), self.config.num_classes], data)
    }

    fn dropout_seeds<R: Rng + ?Sized>(&self, n: usize, mode: Mode, rng: &mut R) -> Vec<u64> {
        match mode {
            Mode::Train => (0..n).map(|_| rng.gen()).collect(),
            Mode::Infer => vec![0; n],
        }
    }

    /// Mean cross-entropy over `batch` and its gradient, with explicit
    /// per-example dropout seeds.
    pub fn loss_and_grad_seeded(&self, batch: &[EncodedExample], mode: Mode, seeds: &[u64]) -> Result<BatchGrad> {
        if batch.is_empty() || seeds.len() != batch.len() {
            return Err(Error::InvalidArgument("need one seed per example in a non-empty batch".into()));
        }
        let classes = self.config.num_classes;
        let inv_n = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_for(self);
        let mut logits = Vec::with_capacity(batch.len() * classes);
        let mut total = 0.0;
        for (ex, &seed) in batch.iter().zip(seeds) {
            if ex.label >= classes {
                return Err(Error::InvalidArgument(format!("label {} out of range", ex.label)));
            }
            let (z, trace) = self.forward_example(ex, mode, seed)?;
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            total += log_z - z[ex.label];
            let mut g = softmax(&z);
            g[ex.label] -= 1.0;
            g.iter_mut().for_each(|v| *v *= inv_n);
            self.backward_example(&trace, &g, &mut grads)?;
            logits.extend(z);
        }
        Ok(BatchGrad {
            loss: total * inv_n,
            logits: Tensor::new(vec![batch.len(), classes], logits)?,
            grads,
        })
    }

    pub fn loss_and_grad<R: Rng + ?Sized>(&self, batch: &[EncodedExample], mode: Mode, rng: &mut R) -> Result<BatchGrad> {
        let seeds = self.dropout_seeds(batch.len(), mode, rng);
        self.loss_and_grad_seeded(batch, mode, &seeds)
    }

    /// Class distribution (softmax of infer-mode logits) and its argmax,
    /// lowest index on ties.
    pub fn predict(&self, example: &EncodedExample) -> Result<(Vec<f64>, usize)> {
        let (logits, _) = self.forward_example(example, Mode::Infer, 0)?;
        let dist = softmax(&logits);
        Ok((dist.clone(), argmax(&dist)))
    }

    pub fn predict_batch(&self, examples: &[EncodedExample]) -> Result<Vec<usize>> {
        examples.iter().map(|e| self.predict(e).map(|(_, c)| c)).collect()
    }
}

/// Index of the largest value, first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
