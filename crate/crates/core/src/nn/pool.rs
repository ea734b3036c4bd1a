use super::{batch_dims, shape_of};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Non-overlapping max pooling (stride == window). Trailing rows/columns that
/// do not fill a window are dropped; ties go to the first element in
/// row-major window order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub pool_h: usize,
    pub pool_w: usize,
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_dims: [usize; 4],
    squeezed: bool,
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(pool_h: usize, pool_w: usize) -> Result<Self> {
        if pool_h == 0 || pool_w == 0 {
            return Err(Error::InvalidParameter("pool size must be >= 1".into()));
        }
        Ok(MaxPool2d { pool_h, pool_w })
    }

    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<[usize; 3]> {
        if self.pool_h > h || self.pool_w > w {
            return Err(Error::Shape(format!(
                "pool {}x{} larger than input {h}x{w}",
                self.pool_h, self.pool_w
            )));
        }
        Ok([c, h / self.pool_h, w / self.pool_w])
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        let ([b, c, h, w], squeezed) = batch_dims(x, "maxpool")?;
        let [_, ho, wo] = self.output_shape(c, h, w)?;
        let xs = x.data();
        let mut y = Vec::with_capacity(b * c * ho * wo);
        let mut argmax = Vec::with_capacity(b * c * ho * wo);
        for plane in 0..b * c {
            let base = plane * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = base + i * self.pool_h * w + j * self.pool_w;
                    for a in 0..self.pool_h {
                        for bb in 0..self.pool_w {
                            let idx = base + (i * self.pool_h + a) * w + j * self.pool_w + bb;
                            if xs[idx] > xs[best] {
                                best = idx;
                            }
                        }
                    }
                    y.push(xs[best]);
                    argmax.push(best);
                }
            }
        }
        Ok((
            Tensor::from_vec(&shape_of([b, c, ho, wo], squeezed), y)?,
            MaxPoolCache {
                input_dims: [b, c, h, w],
                squeezed,
                argmax,
            },
        ))
    }

    pub fn backward(&self, dy: &Tensor, cache: &MaxPoolCache) -> Result<Tensor> {
        if dy.len() != cache.argmax.len() {
            return Err(Error::Contract(format!(
                "maxpool backward: upstream has {} elements, cache {}",
                dy.len(),
                cache.argmax.len()
            )));
        }
        let mut dx = vec![0.0; cache.input_dims.iter().product()];
        for (&g, &idx) in dy.data().iter().zip(&cache.argmax) {
            dx[idx] += g;
        }
        Tensor::from_vec(&shape_of(cache.input_dims, cache.squeezed), dx)
    }
}
