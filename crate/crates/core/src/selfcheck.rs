//! Built-in verification battery: finite-difference gradient checks for every
//! layer and both full models, plus brute-force oracles for the convolution
//! and the confusion matrix.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingMatrix;
use crate::eval::confusion;
use crate::model::{build_model, Arch, Model, ModelConfig};
use crate::nn::{
    bilstm_forward, grad_check, maxpool1d, softmax_cross_entropy, Activation, Conv1d, Dense, LstmParams, Mode, Params,
};
use crate::tensor::Tensor;
use crate::text::{EncodedExample, PAD};

/// Names of the gradient suites, in run order.
pub const GRADIENT_SUITES: [&str; 8] = [
    "dense",
    "conv1d",
    "maxpool",
    "lstm_step",
    "bilstm",
    "softmax_ce",
    "cnn_model",
    "bilstm_model",
];

/// Names of the oracle suites, in run order.
pub const ORACLE_SUITES: [&str; 2] = ["conv1d_oracle", "confusion_oracle"];

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckOptions {
    pub seeds: u64,
    pub epsilon: f64,
    /// Largest accepted relative error of a gradient suite.
    pub tolerance: f64,
    /// Oracle cases per oracle suite.
    pub oracle_cases: u64,
    /// Corrupt the analytic gradient of this suite (negative control).
    pub perturb: Option<String>,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        SelfCheckOptions {
            seeds: 20,
            epsilon: 1e-5,
            tolerance: 1e-4,
            oracle_cases: 100,
            perturb: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: u64,
    /// Worst relative error for gradient suites; mismatch count for oracles.
    pub worst: f64,
    pub passed: bool,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<16} cases={:<4} worst={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst
        )
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("positive shape")
}

fn randomize<P: Params>(p: &mut P, rng: &mut ChaCha8Rng) {
    for (_, t) in p.params_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.8..0.8));
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters then inputs, as one flat vector, and the inverse split.
fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

struct Case {
    theta: Vec<f64>,
    analytic: Vec<f64>,
}

fn finish<F: FnMut(&[f64]) -> f64>(mut case: Case, perturb: bool, eps: f64, loss: F) -> f64 {
    if perturb {
        case.analytic[0] += 1e-2;
    }
    grad_check(&case.theta, &case.analytic, eps, loss)
}

fn dense_case(seed: u64, perturb: bool, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let act = if seed.is_multiple_of(2) { Activation::Relu } else { Activation::Identity };
    let mut layer = Dense::zeros(4, 3);
    randomize(&mut layer, &mut rng);
    let x = random_tensor(&[2, 4], &mut rng);
    let r = random_tensor(&[2, 3], &mut rng);
    let (_, cache) = layer.forward(&x, act).expect("shapes");
    let (gx, grads) = layer.backward(&cache, &r).expect("shapes");
    let n = layer.num_scalars();
    let case = Case {
        theta: concat(&[&layer.flatten(), x.data()]),
        analytic: concat(&[&grads.flatten(), gx.data()]),
    };
    finish(case, perturb, eps, |t| {
        let mut l = layer.clone();
        l.assign_flat(&t[..n]).expect("sizes");
        let x = Tensor::new(vec![2, 4], t[n..].to_vec()).expect("sizes");
        dot(l.forward(&x, act).expect("shapes").0.data(), r.data())
    })
}

fn conv_case(seed: u64, perturb: bool, eps: f64, pool: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (len, d, f, k) = (6, 4, 3, 3);
    let mut layer = Conv1d::zeros(f, k, d);
    randomize(&mut layer, &mut rng);
    let x = random_tensor(&[len, d], &mut rng);
    let steps = len - k + 1;
    let out_rows = if pool { steps / 2 } else { steps };
    let r = random_tensor(&[out_rows, f], &mut rng);
    let forward = |l: &Conv1d, x: &Tensor| -> f64 {
        let (y, _) = l.forward(x, Activation::Relu).expect("shapes");
        let y = if pool { maxpool1d(&y, 2).expect("shapes").0 } else { y };
        dot(y.data(), r.data())
    };
    let (y, cache) = layer.forward(&x, Activation::Relu).expect("shapes");
    let upstream = if pool {
        let (_, pc) = maxpool1d(&y, 2).expect("shapes");
        pc.backward(&r).expect("shapes")
    } else {
        r.clone()
    };
    let (gx, grads) = layer.backward(&cache, &upstream).expect("shapes");
    let n = layer.num_scalars();
    let case = Case {
        theta: concat(&[&layer.flatten(), x.data()]),
        analytic: concat(&[&grads.flatten(), gx.data()]),
    };
    finish(case, perturb, eps, |t| {
        let mut l = layer.clone();
        l.assign_flat(&t[..n]).expect("sizes");
        forward(&l, &Tensor::new(vec![len, d], t[n..].to_vec()).expect("sizes"))
    })
}

fn lstm_step_case(seed: u64, perturb: bool, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, h) = (4, 3);
    let mut cell = LstmParams::zeros(d, h);
    randomize(&mut cell, &mut rng);
    let x = random_tensor(&[d], &mut rng);
    let h0 = random_tensor(&[h], &mut rng);
    let c0 = random_tensor(&[h], &mut rng);
    let rh = random_tensor(&[h], &mut rng);
    let rc = random_tensor(&[h], &mut rng);
    let (_, _, cache) = cell.step(x.data(), h0.data(), c0.data()).expect("shapes");
    let mut grads = cell.zeroed();
    let (dx, dh, dc) = cell.step_backward(&cache, rh.data(), rc.data(), &mut grads, true);
    let n = cell.num_scalars();
    let case = Case {
        theta: concat(&[&cell.flatten(), x.data(), h0.data(), c0.data()]),
        analytic: concat(&[&grads.flatten(), &dx.expect("requested"), &dh, &dc]),
    };
    finish(case, perturb, eps, |t| {
        let mut p = cell.clone();
        p.assign_flat(&t[..n]).expect("sizes");
        let (x, rest) = t[n..].split_at(d);
        let (h0, c0) = rest.split_at(h);
        let (h1, c1, _) = p.step(x, h0, c0).expect("shapes");
        dot(&h1, rh.data()) + dot(&c1, rc.data())
    })
}

fn bilstm_case(seed: u64, perturb: bool, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (len, d, h) = (6, 4, 3);
    let true_length = 1 + (seed as usize % len);
    let mut fw = LstmParams::zeros(d, h);
    let mut bw = LstmParams::zeros(d, h);
    randomize(&mut fw, &mut rng);
    randomize(&mut bw, &mut rng);
    let x = random_tensor(&[len, d], &mut rng);
    let r = random_tensor(&[2 * h], &mut rng);
    let (_, cache) = bilstm_forward(&x, true_length, &fw, &bw).expect("shapes");
    let (mut gfw, mut gbw) = (fw.zeroed(), bw.zeroed());
    let gx = cache
        .backward(&fw, &bw, r.data(), &mut gfw, &mut gbw, true)
        .expect("shapes")
        .expect("requested");
    let n = fw.num_scalars();
    let case = Case {
        theta: concat(&[&fw.flatten(), &bw.flatten(), x.data()]),
        analytic: concat(&[&gfw.flatten(), &gbw.flatten(), gx.data()]),
    };
    finish(case, perturb, eps, |t| {
        let (mut f, mut b) = (fw.clone(), bw.clone());
        f.assign_flat(&t[..n]).expect("sizes");
        b.assign_flat(&t[n..2 * n]).expect("sizes");
        let x = Tensor::new(vec![len, d], t[2 * n..].to_vec()).expect("sizes");
        dot(&bilstm_forward(&x, true_length, &f, &b).expect("shapes").0, r.data())
    })
}

fn softmax_case(seed: u64, perturb: bool, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = random_tensor(&[3, 7], &mut rng);
    let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..7)).collect();
    let out = softmax_cross_entropy(&logits, &labels).expect("shapes");
    let case = Case {
        theta: logits.data().to_vec(),
        analytic: out.grad_logits.data().to_vec(),
    };
    finish(case, perturb, eps, |t| {
        let l = Tensor::new(vec![3, 7], t.to_vec()).expect("sizes");
        softmax_cross_entropy(&l, &labels).expect("shapes").loss
    })
}

/// A 6-token, 4-dimensional model small enough to difference exhaustively.
pub fn tiny_model(arch: Arch, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = ModelConfig::new(arch, 4, true);
    config.seq_len = 6;
    config.num_filters = 3;
    config.cnn_hidden = 5;
    config.lstm_hidden = 3;
    let vocab = 8;
    let mut m = random_tensor(&[vocab, 4], &mut rng);
    m.row_mut(PAD).fill(0.0);
    let embedding = EmbeddingMatrix::from_tensor(m, true).expect("PAD row is zero");
    let mut model = build_model(config, embedding, seed).expect("valid config");
    randomize(model.layers_mut(), &mut rng);
    model
}

fn tiny_batch(rng: &mut ChaCha8Rng) -> Vec<EncodedExample> {
    (0..2)
        .map(|_| {
            let len = rng.gen_range(1..=6);
            let mut indices: Vec<usize> = (0..len).map(|_| rng.gen_range(1..8)).collect();
            indices.resize(6, PAD);
            EncodedExample {
                indices,
                true_length: len,
                label: rng.gen_range(0..7),
            }
        })
        .collect()
}

fn model_case(arch: Arch, seed: u64, perturb: bool, eps: f64) -> f64 {
    let model = tiny_model(arch, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let batch = tiny_batch(&mut rng);
    let seeds = [rng.gen(), rng.gen()];
    let out = model.loss_and_grad_seeded(&batch, Mode::Train, &seeds).expect("shapes");
    let dim = model.embedding().dim();
    let vocab = model.embedding().vocab_size();
    let mut emb_grad = vec![0.0; (vocab - 1) * dim];
    for (row, g) in out.grads.embedding.rows() {
        emb_grad[(row - 1) * dim..row * dim].copy_from_slice(g);
    }
    let n = model.layers().num_scalars();
    let case = Case {
        theta: concat(&[&model.layers().flatten(), &model.embedding().matrix().data()[dim..]]),
        analytic: concat(&[&out.grads.layers.flatten(), &emb_grad]),
    };
    finish(case, perturb, eps, |t| {
        let mut m = model.clone();
        let (layers, matrix) = m.split_mut();
        layers.assign_flat(&t[..n]).expect("sizes");
        matrix.data_mut()[dim..].copy_from_slice(&t[n..]);
        m.loss_and_grad_seeded(&batch, Mode::Train, &seeds).expect("shapes").loss
    })
}

/// Direct loop: for each step and filter, sum over kernel rows then
/// embedding columns, add the bias, apply ReLU.
fn naive_conv(x: &Tensor, layer: &Conv1d) -> Vec<f64> {
    let (k, d, f) = (layer.kernel(), layer.dim(), layer.num_filters());
    let mut out = Vec::new();
    for t in 0..=x.rows() - k {
        for j in 0..f {
            let mut acc = 0.0;
            for a in 0..k {
                for c in 0..d {
                    acc += x.row(t + a)[c] * layer.filters.data()[(j * k + a) * d + c];
                }
            }
            out.push((acc + layer.bias.data()[j]).max(0.0));
        }
    }
    out
}

fn conv_oracle_case(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=4);
    let (len, d, f) = (rng.gen_range(k..k + 8), rng.gen_range(1..6), rng.gen_range(1..7));
    let mut layer = Conv1d::zeros(f, k, d);
    randomize(&mut layer, &mut rng);
    let mut x = random_tensor(&[len, d], &mut rng);
    let pad_from = rng.gen_range(0..=len);
    for r in pad_from..len {
        x.row_mut(r).fill(0.0);
    }
    let (y, _) = layer.forward(&x, Activation::Relu).expect("shapes");
    y.data()
        .iter()
        .zip(naive_conv(&x, &layer))
        .all(|(a, b)| a.to_bits() == b.to_bits())
}

fn confusion_oracle_case(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..300);
    let golds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..7)).collect();
    let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..7)).collect();
    let cm = confusion(&golds, &preds, 7).expect("valid labels");
    (0..7).all(|c| {
        let pairs = golds.iter().zip(&preds);
        let tp = pairs.clone().filter(|&(&g, &p)| g == c && p == c).count() as u64;
        let fp = pairs.clone().filter(|&(&g, &p)| g != c && p == c).count() as u64;
        let fn_ = pairs.filter(|&(&g, &p)| g == c && p != c).count() as u64;
        cm.true_positives(c) == tp && cm.false_positives(c) == fp && cm.false_negatives(c) == fn_
    })
}

/// Runs one suite by name, or `None` for an unknown name.
pub fn run_suite(name: &str, opts: &SelfCheckOptions) -> Option<CheckReport> {
    let perturb = opts.perturb.as_deref() == Some(name);
    let eps = opts.epsilon;
    let gradient: Option<fn(u64, bool, f64) -> f64> = match name {
        "dense" => Some(dense_case),
        "conv1d" => Some(|s, p, e| conv_case(s, p, e, false)),
        "maxpool" => Some(|s, p, e| conv_case(s, p, e, true)),
        "lstm_step" => Some(lstm_step_case),
        "bilstm" => Some(bilstm_case),
        "softmax_ce" => Some(softmax_case),
        "cnn_model" => Some(|s, p, e| model_case(Arch::Cnn, s, p, e)),
        "bilstm_model" => Some(|s, p, e| model_case(Arch::BiLstm, s, p, e)),
        _ => None,
    };
    let static_name = GRADIENT_SUITES.iter().chain(&ORACLE_SUITES).find(|n| **n == name)?;
    if let Some(case) = gradient {
        let worst = (0..opts.seeds)
            .map(|s| case(s, perturb, eps))
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
        return Some(CheckReport {
            name: static_name,
            cases: opts.seeds,
            worst,
            passed: worst < opts.tolerance,
        });
    }
    let case: fn(u64) -> bool = match name {
        "conv1d_oracle" => conv_oracle_case,
        _ => confusion_oracle_case,
    };
    let mismatches = (0..opts.oracle_cases).filter(|&s| !case(s) || perturb).count();
    Some(CheckReport {
        name: static_name,
        cases: opts.oracle_cases,
        worst: mismatches as f64,
        passed: mismatches == 0,
    })
}

/// Every gradient suite followed by every oracle suite.
pub fn run_selfcheck(opts: &SelfCheckOptions) -> Vec<CheckReport> {
    GRADIENT_SUITES
        .iter()
        .chain(&ORACLE_SUITES)
        .map(|name| run_suite(name, opts).expect("known suite"))
        .collect()
}
