//! Deterministic mini-batch training.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::hash::mix_seed;
use crate::model::{argmax, Gradients, Model};
use crate::nn::{Mode, Params};
use crate::text::EncodedExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidArgument(format!(
                "optimizer must be `sgd` or `adam`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Keep a copy of the model from the epoch with the best dev macro-F1.
    pub keep_best: bool,
    /// Rescale gradients whose global norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 25,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            seed: 0,
            shuffle: true,
            keep_best: false,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch_size and epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::InvalidArgument("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Splits `0..n` into batches after a permutation seeded by `seed ^ epoch`
/// (identity order when `shuffle` is off). The last batch may be short.
pub fn minibatches(n: usize, batch_size: usize, seed: u64, epoch: u64, shuffle: bool) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// First-order optimizer with per-parameter state keyed by name.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    steps: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    /// Adam uses β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update over `(name, params, grads)` triples. Nothing is modified
    /// if any gradient is non-finite.
    pub fn step_named<'a, I>(&mut self, items: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, &'a mut [f64], &'a [f64])>,
    {
        let items: Vec<_> = items.into_iter().collect();
        for (name, p, g) in &items {
            if p.len() != g.len() {
                return Err(Error::shape("optimizer", format!("`{name}`: {} params, {} grads", p.len(), g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let lr = self.learning_rate;
        for (name, params, grads) in items {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in params.iter_mut().zip(grads) {
                        *p -= lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
                    let (m, v) = self
                        .moments
                        .entry(name)
                        .or_insert_with(|| (vec![0.0; grads.len()], vec![0.0; grads.len()]));
                    let c1 = 1.0 - b1.powi(t);
                    let c2 = 1.0 - b2.powi(t);
                    for i in 0..grads.len() {
                        let g = grads[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * g;
                        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Updates every layer parameter and, when trainable, every embedding row
    /// except `PAD`.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        let trainable = model.embedding().trainable();
        let (vocab, dim) = (model.embedding().vocab_size(), model.embedding().dim());
        let dense_embedding_grad = trainable.then(|| {
            let mut g = vec![0.0; (vocab - 1) * dim];
            for (row, values) in grads.embedding.rows() {
                if row == 0 {
                    continue;
                }
                g[(row - 1) * dim..row * dim].copy_from_slice(values);
            }
            g
        });
        let grad_tensors = grads.layers.params();
        let (layers, matrix) = model.split_mut();
        let mut items: Vec<(String, &mut [f64], &[f64])> = Vec::new();
        for ((name, p), (_, g)) in layers.params_mut().into_iter().zip(&grad_tensors) {
            items.push((name, p.data_mut(), g.data()));
        }
        if let Some(g) = dense_embedding_grad.as_deref() {
            items.push(("embedding".into(), &mut matrix.data_mut()[dim..], g));
        }
        self.step_named(items)
    }
}

/// Metrics recorded at the end of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean train-mode cross-entropy over the epoch's examples.
    pub loss: f64,
    /// Accuracy of the train-mode predictions made during the epoch.
    pub train_acc: f64,
    pub dev_macro_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Epoch (1-based) with the highest dev macro-F1, earliest on ties.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.records {
            if best.is_none_or(|b| r.dev_macro_f1 > b.dev_macro_f1) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    /// `epoch,loss,train_acc,dev_macro_f1` with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_acc,dev_macro_f1\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.loss, r.train_acc, r.dev_macro_f1);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model after the final epoch.
    pub model: Model,
    pub history: TrainHistory,
    pub best_epoch: usize,
    /// Snapshot from `best_epoch`, kept when [`TrainConfig::keep_best`] is set.
    pub best_model: Option<Model>,
}

/// Macro-F1 of infer-mode predictions.
pub fn macro_f1(model: &Model, examples: &[EncodedExample]) -> Result<f64> {
    let preds = model.predict_batch(examples)?;
    let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
    Ok(evaluate(&golds, &preds, model.config().num_classes)?.macro_f1)
}

pub fn train(mut model: Model, train_set: &[EncodedExample], dev_set: &[EncodedExample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::InvalidArgument("train and dev splits must be non-empty".into()));
    }
    let classes = model.config().num_classes;
    if let Some(e) = train_set.iter().chain(dev_set).find(|e| e.label >= classes) {
        return Err(Error::InvalidArgument(format!("label {} out of range", e.label)));
    }

    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut best: Option<(usize, f64)> = None;
    let mut best_model = None;

    for epoch in 0..cfg.epochs {
        let batches = minibatches(train_set.len(), cfg.batch_size, cfg.seed, epoch as u64, cfg.shuffle)?;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<EncodedExample> = idx.iter().map(|&i| train_set[i].clone()).collect();
            let seeds: Vec<u64> = (0..batch.len())
                .map(|i| mix_seed(&[cfg.seed, epoch as u64, b as u64, i as u64]))
                .collect();
            let mut out = model.loss_and_grad_seeded(&batch, Mode::Train, &seeds)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b,
                    loss: out.loss,
                });
            }
            if let Some(limit) = cfg.clip_norm {
                let norm = out.grads.global_norm();
                if norm > limit {
                    out.grads.scale(limit / norm);
                }
            }
            optimizer.step(&mut model, &out.grads)?;
            loss_sum += out.loss * batch.len() as f64;
            correct += batch
                .iter()
                .enumerate()
                .filter(|(r, e)| argmax(out.logits.row(*r)) == e.label)
                .count();
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            dev_macro_f1: macro_f1(&model, dev_set)?,
        };
        info!(
            "epoch {:>3}  loss {:.5}  train acc {:.4}  dev macro-F1 {:.4}",
            record.epoch, record.loss, record.train_acc, record.dev_macro_f1
        );
        if best.is_none_or(|(_, f)| record.dev_macro_f1 > f) {
            best = Some((record.epoch, record.dev_macro_f1));
            if cfg.keep_best {
                best_model = Some(model.clone());
            }
        }
        history.records.push(record);
    }

    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.map_or(0, |(e, _)| e),
        best_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_sizes() {
        let b = minibatches(100, 32, 1, 0, true).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 32, 32, 4]);
        assert_eq!(b, minibatches(100, 32, 1, 0, true).unwrap());
        assert_ne!(b, minibatches(100, 32, 1, 1, true).unwrap());
        let mut all: Vec<usize> = b.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(minibatches(0, 32, 1, 0, true).is_err());
        assert_eq!(minibatches(3, 2, 9, 0, false).unwrap(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn sgd_one_step() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1);
        let mut p = [1.0];
        opt.step_named([("w".to_owned(), &mut p[..], &[0.5][..])]).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.001);
        let mut p = [0.0];
        opt.step_named([("w".to_owned(), &mut p[..], &[1.0][..])]).unwrap();
        // m̂ = v̂ = 1 → Δ = lr · 1 / (1 + 1e-8)
        assert!((p[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((p[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 0.01);
            let mut p = [0.3, -2.0];
            for _ in 0..3 {
                opt.step_named([("w".to_owned(), &mut p[..], &[0.0, 0.0][..])]).unwrap();
            }
            assert!((p[0] - 0.3).abs() <= 0.01 * 1e-8);
            assert!((p[1] + 2.0).abs() <= 0.01 * 1e-8);
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01);
        let mut a = [1.0];
        let mut b = [1.0];
        let err = opt
            .step_named([
                ("ok".to_owned(), &mut a[..], &[0.1][..]),
                ("hidden.weight".to_owned(), &mut b[..], &[f64::NAN][..]),
            ])
            .unwrap_err();
        assert!(matches!(&err, Error::NonFiniteGradient(n) if n == "hidden.weight"));
        assert_eq!(a, [1.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn history_csv_and_best_epoch() {
        let h = TrainHistory {
            records: vec![
                EpochRecord { epoch: 1, loss: 1.5, train_acc: 0.25, dev_macro_f1: 0.1 },
                EpochRecord { epoch: 2, loss: 1.0, train_acc: 0.5, dev_macro_f1: 0.3 },
                EpochRecord { epoch: 3, loss: 0.5, train_acc: 0.75, dev_macro_f1: 0.3 },
            ],
        };
        assert_eq!(h.best_epoch(), Some(2));
        assert_eq!(
            h.to_csv(),
            "epoch,loss,train_acc,dev_macro_f1\n1,1.5,0.25,0.1\n2,1,0.5,0.3\n3,0.5,0.75,0.3\n"
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { clip_norm: Some(-1.0), ..Default::default() }.validate().is_err());
    }
}
