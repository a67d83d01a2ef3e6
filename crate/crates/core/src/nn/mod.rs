//! Layers with hand-written forward and backward passes.
//!
//! Every layer keeps what its backward pass needs in a cache value returned
//! from `forward`. Reductions run in a fixed order so results are
//! bit-reproducible from run to run.

mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod loss;
mod lstm;
mod params;
mod pool;

pub use conv::{Conv1d, Conv1dCache};
pub use dense::{Dense, DenseCache};
pub use dropout::{dropout, DropoutMask};
pub use gradcheck::{grad_check, relative_error};
pub use loss::{softmax, softmax_cross_entropy, SoftmaxCrossEntropy};
pub use lstm::{bilstm_forward, BiLstmCache, LstmParams, LstmStepCache, Gate};
pub use params::Params;
pub use pool::{maxpool1d, MaxPoolCache};

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub(crate) fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "train" => Ok(Mode::Train),
            "infer" => Ok(Mode::Infer),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Infer => "infer",
        })
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
