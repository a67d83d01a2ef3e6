use rand::Rng;

use super::dense::glorot_fill;
use super::{Activation, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Valid 1-D convolution over a `L × D` sequence with `F` filters of width `K`.
///
/// `out[t][f] = act(bias[f] + Σ_k Σ_d x[t+k][d] · filters[f][k][d])`, the sum
/// accumulated from zero with `k` outer and `d` inner, bias added last.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `F × K × D`
    pub filters: Tensor,
    /// `F`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    input: Tensor,
    output: Tensor,
    activation: Activation,
}

impl Conv1dCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

impl Conv1d {
    pub fn new(filters: Tensor, bias: Tensor) -> Result<Self> {
        if filters.rank() != 3 || bias.shape() != [filters.shape()[0]] {
            return Err(Error::shape(
                "conv1d",
                format!("filters {:?} with bias {:?}", filters.shape(), bias.shape()),
            ));
        }
        Ok(Conv1d { filters, bias })
    }

    pub fn zeros(num_filters: usize, kernel: usize, dim: usize) -> Self {
        Conv1d {
            filters: Tensor::zeros(&[num_filters, kernel, dim]),
            bias: Tensor::zeros(&[num_filters]),
        }
    }

    /// Glorot-uniform with `fan_in = K·D`, `fan_out = K·F`.
    pub fn glorot<R: Rng>(num_filters: usize, kernel: usize, dim: usize, rng: &mut R) -> Self {
        let mut c = Conv1d::zeros(num_filters, kernel, dim);
        glorot_fill(&mut c.filters, kernel * dim, kernel * num_filters, rng);
        c
    }

    pub fn num_filters(&self) -> usize {
        self.filters.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.filters.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.filters.shape()[2]
    }

    pub fn forward(&self, x: &Tensor, activation: Activation) -> Result<(Tensor, Conv1dCache)> {
        let (nf, k, d) = (self.num_filters(), self.kernel(), self.dim());
        if x.rank() != 2 || x.shape()[1] != d {
            return Err(Error::shape(
                "conv1d forward",
                format!("input {:?} for filters {:?}", x.shape(), self.filters.shape()),
            ));
        }
        let len = x.rows();
        if len < k {
            return Err(Error::shape(
                "conv1d forward",
                format!("sequence length {len} shorter than kernel {k}"),
            ));
        }
        let steps = len - k + 1;
        let span = k * d;
        let w = self.filters.data();
        let bias = self.bias.data();
        let mut out = Tensor::zeros(&[steps, nf]);
        for t in 0..steps {
            // A window is contiguous in row-major layout, ordered k-major then d.
            let window = &x.data()[t * d..t * d + span];
            let row = out.row_mut(t);
            if window.iter().all(|&v| v == 0.0) {
                // Every product is a zero, so the running sum stays +0.0.
                for (o, &b) in row.iter_mut().zip(bias) {
                    *o = activation.apply(0.0 + b);
                }
                continue;
            }
            let mut f = 0;
            while f + 4 <= nf {
                let (w0, w1, w2, w3) = (
                    &w[f * span..(f + 1) * span],
                    &w[(f + 1) * span..(f + 2) * span],
                    &w[(f + 2) * span..(f + 3) * span],
                    &w[(f + 3) * span..(f + 4) * span],
                );
                let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
                for j in 0..span {
                    let xv = window[j];
                    a0 += xv * w0[j];
                    a1 += xv * w1[j];
                    a2 += xv * w2[j];
                    a3 += xv * w3[j];
                }
                row[f] = activation.apply(a0 + bias[f]);
                row[f + 1] = activation.apply(a1 + bias[f + 1]);
                row[f + 2] = activation.apply(a2 + bias[f + 2]);
                row[f + 3] = activation.apply(a3 + bias[f + 3]);
                f += 4;
            }
            for f in f..nf {
                let wf = &w[f * span..(f + 1) * span];
                let mut acc = 0.0;
                for (xv, wv) in window.iter().zip(wf) {
                    acc += xv * wv;
                }
                row[f] = activation.apply(acc + bias[f]);
            }
        }
        let cache = Conv1dCache {
            input: x.clone(),
            output: out.clone(),
            activation,
        };
        Ok((out, cache))
    }

    /// Returns `(grad_x, grads)`.
    pub fn backward(&self, cache: &Conv1dCache, grad_out: &Tensor) -> Result<(Tensor, Conv1d)> {
        let mut grads = self.zeroed();
        let gx = self.backward_into(cache, grad_out, &mut grads, true)?;
        Ok((gx.expect("input gradient requested"), grads))
    }

    /// Adds filter and bias gradients into `grads`. The input gradient is only
    /// computed when `need_input` is set.
    pub fn backward_into(
        &self,
        cache: &Conv1dCache,
        grad_out: &Tensor,
        grads: &mut Conv1d,
        need_input: bool,
    ) -> Result<Option<Tensor>> {
        if grad_out.shape() != cache.output.shape() {
            return Err(Error::shape(
                "conv1d backward",
                format!("upstream {:?} vs output {:?}", grad_out.shape(), cache.output.shape()),
            ));
        }
        let (nf, k, d) = (self.num_filters(), self.kernel(), self.dim());
        let span = k * d;
        let steps = cache.output.rows();
        let mut gx = need_input.then(|| Tensor::zeros(cache.input.shape()));
        let w = self.filters.data();
        for t in 0..steps {
            let window = &cache.input.data()[t * d..t * d + span];
            for f in 0..nf {
                let g = grad_out.row(t)[f] * cache.activation.grad_from_output(cache.output.row(t)[f]);
                if g == 0.0 {
                    continue;
                }
                grads.bias.data_mut()[f] += g;
                let gw = &mut grads.filters.data_mut()[f * span..(f + 1) * span];
                for (a, &xv) in gw.iter_mut().zip(window) {
                    *a += g * xv;
                }
                if let Some(gx) = gx.as_mut() {
                    let gwin = &mut gx.data_mut()[t * d..t * d + span];
                    for (a, &wv) in gwin.iter_mut().zip(&w[f * span..(f + 1) * span]) {
                        *a += g * wv;
                    }
                }
            }
        }
        Ok(gx)
    }
}

impl Params for Conv1d {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("filters".into(), &self.filters), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("filters".into(), &mut self.filters), ("bias".into(), &mut self.bias)]
    }
}
