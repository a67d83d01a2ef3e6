use rand::Rng;

use super::{Activation, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fully connected layer, `out = act(x·W + b)` with `W: In × Out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
    output: Tensor,
    activation: Activation,
}

impl DenseCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::shape(
                "dense",
                format!("weight {:?} with bias {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Dense { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut d = Dense::zeros(inputs, outputs);
        glorot_fill(&mut d.weight, inputs, outputs, rng);
        d
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor, activation: Activation) -> Result<(Tensor, DenseCache)> {
        if x.rank() != 2 || x.shape()[1] != self.inputs() {
            return Err(Error::shape(
                "dense forward",
                format!("input {:?} for weight {:?}", x.shape(), self.weight.shape()),
            ));
        }
        let (n, width) = (x.rows(), self.outputs());
        let w = self.weight.data();
        let mut out = Tensor::zeros(&[n, width]);
        for r in 0..n {
            let row = out.row_mut(r);
            for (i, &xi) in x.row(r).iter().enumerate() {
                let wi = &w[i * width..(i + 1) * width];
                for (o, &wv) in row.iter_mut().zip(wi) {
                    *o += xi * wv;
                }
            }
            for (o, &b) in row.iter_mut().zip(self.bias.data()) {
                *o = activation.apply(*o + b);
            }
        }
        let cache = DenseCache {
            input: x.clone(),
            output: out.clone(),
            activation,
        };
        Ok((out, cache))
    }

    /// Returns `(grad_x, grads)`.
    pub fn backward(&self, cache: &DenseCache, grad_out: &Tensor) -> Result<(Tensor, Dense)> {
        let mut grads = self.zeroed();
        let gx = self.backward_into(cache, grad_out, &mut grads, true)?;
        Ok((gx.expect("input gradient requested"), grads))
    }

    /// Adds parameter gradients into `grads`; computes the input gradient only
    /// when `need_input` is set.
    pub fn backward_into(
        &self,
        cache: &DenseCache,
        grad_out: &Tensor,
        grads: &mut Dense,
        need_input: bool,
    ) -> Result<Option<Tensor>> {
        if grad_out.shape() != cache.output.shape() {
            return Err(Error::shape(
                "dense backward",
                format!("upstream {:?} vs output {:?}", grad_out.shape(), cache.output.shape()),
            ));
        }
        let (n, width) = (cache.input.rows(), self.outputs());
        let mut gx = need_input.then(|| Tensor::zeros(cache.input.shape()));
        let mut g_pre = vec![0.0; width];
        for r in 0..n {
            for ((g, &up), &y) in g_pre.iter_mut().zip(grad_out.row(r)).zip(cache.output.row(r)) {
                *g = up * cache.activation.grad_from_output(y);
            }
            for (b, &g) in grads.bias.data_mut().iter_mut().zip(&g_pre) {
                *b += g;
            }
            let gw = grads.weight.data_mut();
            for (i, &xi) in cache.input.row(r).iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (w, &g) in gw[i * width..(i + 1) * width].iter_mut().zip(&g_pre) {
                    *w += xi * g;
                }
            }
            if let Some(gx) = gx.as_mut() {
                let w = self.weight.data();
                for (i, dx) in gx.row_mut(r).iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (&wv, &g) in w[i * width..(i + 1) * width].iter().zip(&g_pre) {
                        acc += wv * g;
                    }
                    *dx = acc;
                }
            }
        }
        Ok(gx)
    }
}

impl Params for Dense {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}

/// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_fill<R: Rng>(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.gen_range(-limit..=limit);
    }
}
