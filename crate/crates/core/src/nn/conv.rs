use super::gemm::gemm;
use super::{batch_dims, shape_of};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Valid (unpadded) stride-1 2-D convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels, kh, kw]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Conv2dCache {
    input_dims: [usize; 4],
    squeezed: bool,
    /// im2col matrix per sample, `[B, H_out·W_out, C_in·kh·kw]`.
    cols: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            ([co, _, _, _], [cb]) if co == cb => Ok(Conv2d { weight, bias }),
            (w, b) => Err(Error::Shape(format!(
                "conv weight {w:?} / bias {b:?} mismatch"
            ))),
        }
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kh: usize, kw: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[out_channels, in_channels, kh, kw])?,
            Tensor::zeros(&[out_channels])?,
        )
    }

    /// He-normal weights (std = sqrt(2 / fan_in)), zero bias.
    pub fn he_normal(
        in_channels: usize,
        out_channels: usize,
        kh: usize,
        kw: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = (in_channels * kh * kw) as f64;
        Self::new(
            Tensor::randn(
                &[out_channels, in_channels, kh, kw],
                rng,
                0.0,
                (2.0 / fan_in).sqrt(),
            )?,
            Tensor::zeros(&[out_channels])?,
        )
    }

    fn dims(&self) -> [usize; 4] {
        let s = self.weight.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn out_channels(&self) -> usize {
        self.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.dims()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        let d = self.dims();
        (d[2], d[3])
    }

    /// `[C_out, H - kh + 1, W - kw + 1]` for an input `[C_in, H, W]`.
    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<[usize; 3]> {
        let [co, ci, kh, kw] = self.dims();
        if c != ci {
            return Err(Error::Shape(format!(
                "conv expects {ci} input channels, got {c}"
            )));
        }
        if h < kh || w < kw {
            return Err(Error::Shape(format!(
                "kernel {kh}x{kw} larger than input {h}x{w}"
            )));
        }
        Ok([co, h - kh + 1, w - kw + 1])
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv2dCache)> {
        let ([b, c, h, w], squeezed) = batch_dims(x, "conv2d")?;
        let [co, ho, wo] = self.output_shape(c, h, w)?;
        let (kh, kw) = self.kernel();
        let k = c * kh * kw;
        let p = ho * wo;
        let xs = x.data();

        let mut cols = vec![0.0; b * p * k];
        for bi in 0..b {
            let sample = &xs[bi * c * h * w..(bi + 1) * c * h * w];
            let out = &mut cols[bi * p * k..(bi + 1) * p * k];
            for i in 0..ho {
                for j in 0..wo {
                    let row = &mut out[(i * wo + j) * k..(i * wo + j + 1) * k];
                    let mut idx = 0;
                    for ch in 0..c {
                        for a in 0..kh {
                            let base = (ch * h + i + a) * w + j;
                            row[idx..idx + kw].copy_from_slice(&sample[base..base + kw]);
                            idx += kw;
                        }
                    }
                }
            }
        }

        let mut y = vec![0.0; b * co * p];
        let bias = self.bias.data();
        for bi in 0..b {
            let yb = &mut y[bi * co * p..(bi + 1) * co * p];
            for (oc, chunk) in yb.chunks_exact_mut(p).enumerate() {
                chunk.fill(bias[oc]);
            }
            gemm(
                co,
                k,
                p,
                self.weight.data(),
                (k, 1),
                &cols[bi * p * k..(bi + 1) * p * k],
                (1, k),
                1.0,
                yb,
                (p, 1),
            );
        }
        let y = Tensor::from_vec(&shape_of([b, co, ho, wo], squeezed), y)?;
        Ok((
            y,
            Conv2dCache {
                input_dims: [b, c, h, w],
                squeezed,
                cols,
            },
        ))
    }

    pub fn backward(&self, dy: &Tensor, cache: &Conv2dCache) -> Result<Conv2dGrads> {
        let [b, c, h, w] = cache.input_dims;
        let [co, ho, wo] = self.output_shape(c, h, w)?;
        let expected = shape_of([b, co, ho, wo], cache.squeezed);
        if dy.shape() != expected.as_slice() {
            return Err(Error::Contract(format!(
                "conv backward: upstream gradient {:?} does not match cached output {expected:?}",
                dy.shape()
            )));
        }
        let (kh, kw) = self.kernel();
        let k = c * kh * kw;
        let p = ho * wo;
        let g = dy.data();

        let mut dw = vec![0.0; co * k];
        let mut db = vec![0.0; co];
        let mut dx = vec![0.0; b * c * h * w];
        let mut dcols = vec![0.0; p * k];
        for bi in 0..b {
            let gb = &g[bi * co * p..(bi + 1) * co * p];
            for (oc, chunk) in gb.chunks_exact(p).enumerate() {
                db[oc] += chunk.iter().sum::<f64>();
            }
            let cols = &cache.cols[bi * p * k..(bi + 1) * p * k];
            gemm(co, p, k, gb, (p, 1), cols, (k, 1), 1.0, &mut dw, (k, 1));
            gemm(
                p,
                co,
                k,
                gb,
                (1, p),
                self.weight.data(),
                (k, 1),
                0.0,
                &mut dcols,
                (k, 1),
            );
            let dxb = &mut dx[bi * c * h * w..(bi + 1) * c * h * w];
            for i in 0..ho {
                for j in 0..wo {
                    let row = &dcols[(i * wo + j) * k..(i * wo + j + 1) * k];
                    let mut idx = 0;
                    for ch in 0..c {
                        for a in 0..kh {
                            let base = (ch * h + i + a) * w + j;
                            for (d, r) in dxb[base..base + kw].iter_mut().zip(&row[idx..idx + kw]) {
                                *d += r;
                            }
                            idx += kw;
                        }
                    }
                }
            }
        }
        Ok(Conv2dGrads {
            input: Tensor::from_vec(&shape_of([b, c, h, w], cache.squeezed), dx)?,
            weight: Tensor::from_vec(self.weight.shape(), dw)?,
            bias: Tensor::from_vec(&[co], db)?,
        })
    }
}
