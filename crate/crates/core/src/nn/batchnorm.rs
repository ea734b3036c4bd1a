use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel batch normalization over `[B, C, ...]` inputs.
///
/// Train mode normalizes with the batch mean and population variance and
/// folds them into the running statistics with
/// `running = (1 - momentum) * running + momentum * batch`.
/// Eval mode uses the running statistics only.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    shape: Vec<usize>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl BatchNorm {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bn eps must be > 0, got {eps}"
            )));
        }
        if !(momentum > 0.0 && momentum <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bn momentum must lie in (0, 1], got {momentum}"
            )));
        }
        Ok(BatchNorm {
            gamma: Tensor::new(&[channels], 1.0)?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::new(&[channels], 1.0)?,
            eps,
            momentum,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let s = x.shape();
        if s.len() < 2 {
            return Err(Error::Shape(format!(
                "batchnorm expects [B, C, ...], got {s:?}"
            )));
        }
        if s[1] != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm has {} channels, input {s:?}",
                self.channels()
            )));
        }
        Ok((s[0], s[1], s[2..].iter().product()))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Eval => self.forward_eval(x),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        let (b, c, s) = self.layout(x)?;
        if b < 2 {
            return Err(Error::DegenerateBatch(format!(
                "train-mode batchnorm needs at least 2 samples, got {b}"
            )));
        }
        let n = (b * s) as f64;
        let xs = x.data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * s;
                mean[ch] += xs[off..off + s].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * s;
                var[ch] += xs[off..off + s]
                    .iter()
                    .map(|v| (v - mean[ch]).powi(2))
                    .sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= n);

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (y, xhat) = self.normalize(x, (b, c, s), &mean, &inv_std)?;

        let m = self.momentum;
        for ch in 0..c {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (1.0 - m) * *rm + m * mean[ch];
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (1.0 - m) * *rv + m * var[ch];
        }
        Ok((
            y,
            BatchNormCache {
                mode: Mode::Train,
                shape: x.shape().to_vec(),
                xhat,
                inv_std,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        let dims = self.layout(x)?;
        let inv_std: Vec<f64> = self
            .running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect();
        let (y, xhat) = self.normalize(x, dims, self.running_mean.data(), &inv_std)?;
        Ok((
            y,
            BatchNormCache {
                mode: Mode::Eval,
                shape: x.shape().to_vec(),
                xhat,
                inv_std,
            },
        ))
    }

    fn normalize(
        &self,
        x: &Tensor,
        (b, c, s): (usize, usize, usize),
        mean: &[f64],
        inv_std: &[f64],
    ) -> Result<(Tensor, Vec<f64>)> {
        let xs = x.data();
        let mut xhat = vec![0.0; xs.len()];
        let mut y = vec![0.0; xs.len()];
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * s;
                for k in off..off + s {
                    let h = (xs[k] - mean[ch]) * inv_std[ch];
                    xhat[k] = h;
                    y[k] = gamma[ch] * h + beta[ch];
                }
            }
        }
        Ok((Tensor::from_vec(x.shape(), y)?, xhat))
    }

    /// Gradients of the forward map that produced `cache`; in train mode the
    /// chain runs through the batch mean and variance.
    pub fn backward(&self, dy: &Tensor, cache: &BatchNormCache) -> Result<BatchNormGrads> {
        if dy.shape() != cache.shape.as_slice() {
            return Err(Error::Contract(format!(
                "batchnorm backward: upstream {:?} vs cached {:?}",
                dy.shape(),
                cache.shape
            )));
        }
        let (b, c, s) = self.layout(dy)?;
        let g = dy.data();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * s;
                for k in off..off + s {
                    dbeta[ch] += g[k];
                    dgamma[ch] += g[k] * cache.xhat[k];
                }
            }
        }
        let gamma = self.gamma.data();
        let mut dx = vec![0.0; g.len()];
        let n = (b * s) as f64;
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * s;
                let scale = gamma[ch] * cache.inv_std[ch];
                for k in off..off + s {
                    dx[k] = match cache.mode {
                        Mode::Eval => scale * g[k],
                        Mode::Train => {
                            scale * (g[k] - dbeta[ch] / n - cache.xhat[k] * dgamma[ch] / n)
                        }
                    };
                }
            }
        }
        Ok(BatchNormGrads {
            input: Tensor::from_vec(dy.shape(), dx)?,
            gamma: Tensor::from_vec(&[c], dgamma)?,
            beta: Tensor::from_vec(&[c], dbeta)?,
        })
    }
}
