//! Hand-written layers with explicit forward caches and analytic backward
//! passes, plus the composed per-element network.

mod activation;
mod adam;
mod batchnorm;
pub mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod gemm;
mod loss;
mod network;
mod pool;

pub use activation::{relu, relu_backward, ReluCache};
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache, BatchNormGrads};
pub use conv::{Conv2d, Conv2dCache, Conv2dGrads};
pub use dense::{Dense, DenseCache, DenseGrads};
pub use dropout::{Dropout, DropoutCache};
pub use loss::{softmax, softmax_cross_entropy};
pub use network::{ArchConfig, InputLayout, Network, NetworkCache, SENSORS};
pub use pool::{MaxPool2d, MaxPoolCache};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Interprets `[C, H, W]` as a batch of one and `[B, C, H, W]` as is.
/// Returns the 4-D dims and whether the batch axis was added.
pub(crate) fn batch_dims(x: &Tensor, what: &str) -> Result<([usize; 4], bool)> {
    match *x.shape() {
        [c, h, w] => Ok(([1, c, h, w], true)),
        [b, c, h, w] => Ok(([b, c, h, w], false)),
        ref s => Err(Error::Shape(format!(
            "{what} expects [C, H, W] or [B, C, H, W], got {s:?}"
        ))),
    }
}

pub(crate) fn shape_of(dims: [usize; 4], squeezed: bool) -> Vec<usize> {
    if squeezed {
        dims[1..].to_vec()
    } else {
        dims.to_vec()
    }
}
