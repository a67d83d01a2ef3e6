use rand::Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-element scale factors applied by [`dropout`]: `0` or `1/p`.
/// `None` means the layer acted as the identity.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    scale: Option<Vec<f64>>,
}

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask { scale: None }
    }

    pub fn kept(&self) -> Option<usize> {
        self.scale.as_ref().map(|s| s.iter().filter(|&&v| v != 0.0).count())
    }

    /// Applies the same mask and scale to an upstream gradient.
    pub fn backward(&self, grad: &Tensor) -> Result<Tensor> {
        match &self.scale {
            None => Ok(grad.clone()),
            Some(scale) => {
                if scale.len() != grad.len() {
                    return Err(Error::shape(
                        "dropout backward",
                        format!("mask of {} for gradient {:?}", scale.len(), grad.shape()),
                    ));
                }
                let mut g = grad.clone();
                for (v, s) in g.data_mut().iter_mut().zip(scale) {
                    *v *= s;
                }
                Ok(g)
            }
        }
    }
}

/// Inverted dropout: in train mode each element survives with probability
/// `keep_prob` and survivors are scaled by `1 / keep_prob`; infer mode is the
/// identity.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, keep_prob: f64, mode: Mode, rng: &mut R) -> Result<(Tensor, DropoutMask)> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep probability must be in (0, 1], got {keep_prob}"
        )));
    }
    if mode == Mode::Infer || keep_prob == 1.0 {
        return Ok((x.clone(), DropoutMask::identity()));
    }
    let inv = 1.0 / keep_prob;
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < keep_prob { inv } else { 0.0 })
        .collect();
    let mut out = x.clone();
    for (v, s) in out.data_mut().iter_mut().zip(&scale) {
        *v *= s;
    }
    Ok((out, DropoutMask { scale: Some(scale) }))
}
