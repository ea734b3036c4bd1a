use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Fully connected layer `y = w·u + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[out_features, in_features]`
    pub weight: Tensor,
    /// `[out_features]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            ([o, _], [ob]) if o == ob => Ok(Dense { weight, bias }),
            (w, b) => Err(Error::Shape(format!(
                "dense weight {w:?} / bias {b:?} mismatch"
            ))),
        }
    }

    pub fn he_normal(in_features: usize, out_features: usize, rng: &mut Rng) -> Result<Self> {
        Self::new(
            Tensor::randn(
                &[out_features, in_features],
                rng,
                0.0,
                (2.0 / in_features as f64).sqrt(),
            )?,
            Tensor::zeros(&[out_features])?,
        )
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn rows(&self, u: &Tensor) -> Result<(usize, bool)> {
        match *u.shape() {
            [n] if n == self.in_features() => Ok((1, true)),
            [b, n] if n == self.in_features() => Ok((b, false)),
            ref s => Err(Error::Shape(format!(
                "dense expects [{}] or [B, {}], got {s:?}",
                self.in_features(),
                self.in_features()
            ))),
        }
    }

    /// Accepts `[in]` or a batch `[B, in]`.
    pub fn forward(&self, u: &Tensor) -> Result<(Tensor, DenseCache)> {
        let (b, single) = self.rows(u)?;
        let (o, n) = (self.out_features(), self.in_features());
        let (w, bias) = (self.weight.data(), self.bias.data());
        let mut y = Vec::with_capacity(b * o);
        for row in u.data().chunks_exact(n) {
            for k in 0..o {
                let wr = &w[k * n..(k + 1) * n];
                y.push(bias[k] + wr.iter().zip(row).map(|(a, x)| a * x).sum::<f64>());
            }
        }
        let shape: Vec<usize> = if single { vec![o] } else { vec![b, o] };
        Ok((
            Tensor::from_vec(&shape, y)?,
            DenseCache { input: u.clone() },
        ))
    }

    pub fn backward(&self, dy: &Tensor, cache: &DenseCache) -> Result<DenseGrads> {
        let (b, _) = self.rows(&cache.input)?;
        let (o, n) = (self.out_features(), self.in_features());
        if dy.len() != b * o {
            return Err(Error::Contract(format!(
                "dense backward: upstream {:?} for batch of {b}",
                dy.shape()
            )));
        }
        let w = self.weight.data();
        let mut du = vec![0.0; b * n];
        let mut dw = vec![0.0; o * n];
        let mut db = vec![0.0; o];
        for (bi, (g, u)) in dy
            .data()
            .chunks_exact(o)
            .zip(cache.input.data().chunks_exact(n))
            .enumerate()
        {
            let dur = &mut du[bi * n..(bi + 1) * n];
            for k in 0..o {
                db[k] += g[k];
                let wr = &w[k * n..(k + 1) * n];
                let dwr = &mut dw[k * n..(k + 1) * n];
                for j in 0..n {
                    dur[j] += wr[j] * g[k];
                    dwr[j] += g[k] * u[j];
                }
            }
        }
        Ok(DenseGrads {
            input: Tensor::from_vec(cache.input.shape(), du)?,
            weight: Tensor::from_vec(&[o, n], dw)?,
            bias: Tensor::from_vec(&[o], db)?,
        })
    }
}
