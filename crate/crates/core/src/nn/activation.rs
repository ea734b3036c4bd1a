use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ReluCache {
    shape: Vec<usize>,
    active: Vec<bool>,
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> (Tensor, ReluCache) {
    let active: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
    let y = x.map(|v| if v > 0.0 { v } else { 0.0 });
    (
        y,
        ReluCache {
            shape: x.shape().to_vec(),
            active,
        },
    )
}

/// Passes the gradient where the input was positive, zero elsewhere.
pub fn relu_backward(dy: &Tensor, cache: &ReluCache) -> Result<Tensor> {
    if dy.shape() != cache.shape.as_slice() {
        return Err(Error::Contract(format!(
            "relu backward: upstream {:?} vs cached {:?}",
            dy.shape(),
            cache.shape
        )));
    }
    let data = dy
        .data()
        .iter()
        .zip(&cache.active)
        .map(|(&g, &a)| if a { g } else { 0.0 })
        .collect();
    Tensor::from_vec(dy.shape(), data)
}
