use super::Mode;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by `1 / (1 - p)`; eval mode is the identity.
///
/// Train mode with `p > 0` consumes exactly one uniform per element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    p: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    /// Per-element multiplier, absent when the forward pass was the identity.
    scale: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        Ok(Dropout { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> (Tensor, DropoutCache) {
        if mode == Mode::Eval || self.p == 0.0 {
            return (x.clone(), DropoutCache { scale: None });
        }
        let keep = 1.0 / (1.0 - self.p);
        let scale: Vec<f64> = (0..x.len())
            .map(|_| if rng.uniform() < self.p { 0.0 } else { keep })
            .collect();
        let mut y = x.clone();
        y.data_mut()
            .iter_mut()
            .zip(&scale)
            .for_each(|(v, s)| *v *= s);
        (y, DropoutCache { scale: Some(scale) })
    }

    pub fn backward(&self, dy: &Tensor, cache: &DropoutCache) -> Result<Tensor> {
        match &cache.scale {
            None => Ok(dy.clone()),
            Some(scale) if scale.len() == dy.len() => {
                let mut dx = dy.clone();
                dx.data_mut()
                    .iter_mut()
                    .zip(scale)
                    .for_each(|(v, s)| *v *= s);
                Ok(dx)
            }
            Some(scale) => Err(Error::Contract(format!(
                "dropout backward: upstream has {} elements, mask {}",
                dy.len(),
                scale.len()
            ))),
        }
    }
}
