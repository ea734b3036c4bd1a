use serde::{Deserialize, Serialize};

use super::{
    relu, relu_backward, softmax_cross_entropy, AdamConfig, AdamState, BatchNorm, BatchNormCache,
    Conv2d, Conv2dCache, Dense, DenseCache, Dropout, DropoutCache, MaxPool2d, MaxPoolCache, Mode,
    ReluCache,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Number of accelerometer columns in a frame.
pub const SENSORS: usize = 3;

/// How a `[s_f, 3]` frame is presented to the first convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputLayout {
    /// One channel, sensors along the image width: `[1, s_f, 3]`.
    Width,
    /// Sensors as channels: `[3, s_f, 1]`.
    Channels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub frame_len: usize,
    pub layout: InputLayout,
    pub conv1_filters: usize,
    pub conv1_kernel: [usize; 2],
    pub pool1: [usize; 2],
    pub conv2_filters: usize,
    pub conv2_kernel: [usize; 2],
    pub pool2: [usize; 2],
    pub dropout: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            frame_len: 256,
            layout: InputLayout::Width,
            conv1_filters: 16,
            conv1_kernel: [5, 2],
            pool1: [2, 1],
            conv2_filters: 32,
            conv2_kernel: [5, 2],
            pool2: [2, 1],
            dropout: 0.5,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl ArchConfig {
    /// The sensors-as-channels variant with width-1 kernels.
    pub fn channels_variant() -> Self {
        ArchConfig {
            layout: InputLayout::Channels,
            conv1_kernel: [5, 1],
            conv2_kernel: [5, 1],
            ..Self::default()
        }
    }

    pub fn input_dims(&self) -> [usize; 3] {
        match self.layout {
            InputLayout::Width => [1, self.frame_len, SENSORS],
            InputLayout::Channels => [SENSORS, self.frame_len, 1],
        }
    }

    /// Activation shapes (per sample) after each stage, validating that the
    /// stack fits the configured frame.
    pub fn stage_shapes(&self) -> Result<Vec<(&'static str, Vec<usize>)>> {
        if self.frame_len == 0 {
            return Err(Error::Config("frame_len must be > 0".into()));
        }
        let conv_shape = |[c, h, w]: [usize; 3], f: usize, [kh, kw]: [usize; 2]| {
            if kh == 0 || kw == 0 || f == 0 {
                return Err(Error::Config(
                    "conv filters and kernel sizes must be >= 1".into(),
                ));
            }
            if h < kh || w < kw {
                return Err(Error::Shape(format!(
                    "kernel {kh}x{kw} does not fit activation [{c}, {h}, {w}]"
                )));
            }
            Ok([f, h - kh + 1, w - kw + 1])
        };
        let pool_shape = |[c, h, w]: [usize; 3], [ph, pw]: [usize; 2]| {
            if ph == 0 || pw == 0 || ph > h || pw > w {
                return Err(Error::Shape(format!(
                    "pool {ph}x{pw} does not fit activation [{c}, {h}, {w}]"
                )));
            }
            Ok([c, h / ph, w / pw])
        };
        let input = self.input_dims();
        let c1 = conv_shape(input, self.conv1_filters, self.conv1_kernel)?;
        let p1 = pool_shape(c1, self.pool1)?;
        let c2 = conv_shape(p1, self.conv2_filters, self.conv2_kernel)?;
        let p2 = pool_shape(c2, self.pool2)?;
        let flat = p2.iter().product();
        Ok(vec![
            ("input", input.to_vec()),
            ("conv1", c1.to_vec()),
            ("pool1", p1.to_vec()),
            ("conv2", c2.to_vec()),
            ("pool2", p2.to_vec()),
            ("flatten", vec![flat]),
            ("dense", vec![2]),
        ])
    }

    pub fn flat_features(&self) -> Result<usize> {
        Ok(self.stage_shapes()?[5].1[0])
    }
}

/// Learnable layers and normalization buffers of one network.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layers {
    pub input_bn: BatchNorm,
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    pub dense: Dense,
}

/// Tensor names in checkpoint and optimizer order. The first twelve are
/// trainable; the rest are batchnorm running statistics.
pub(crate) const TENSOR_NAMES: [&str; 18] = [
    "input_bn.gamma",
    "input_bn.beta",
    "conv1.weight",
    "conv1.bias",
    "bn1.gamma",
    "bn1.beta",
    "conv2.weight",
    "conv2.bias",
    "bn2.gamma",
    "bn2.beta",
    "dense.weight",
    "dense.bias",
    "input_bn.running_mean",
    "input_bn.running_var",
    "bn1.running_mean",
    "bn1.running_var",
    "bn2.running_mean",
    "bn2.running_var",
];
const TRAINABLE: usize = 12;

impl Layers {
    fn tensors(&self) -> [&Tensor; 18] {
        [
            &self.input_bn.gamma,
            &self.input_bn.beta,
            &self.conv1.weight,
            &self.conv1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.dense.weight,
            &self.dense.bias,
            &self.input_bn.running_mean,
            &self.input_bn.running_var,
            &self.bn1.running_mean,
            &self.bn1.running_var,
            &self.bn2.running_mean,
            &self.bn2.running_var,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 18] {
        [
            &mut self.input_bn.gamma,
            &mut self.input_bn.beta,
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.dense.weight,
            &mut self.dense.bias,
            &mut self.input_bn.running_mean,
            &mut self.input_bn.running_var,
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
        ]
    }
}

/// Everything the backward pass needs from one train-mode forward pass.
#[derive(Debug, Clone)]
pub struct NetworkCache {
    bn0: BatchNormCache,
    conv1: Conv2dCache,
    bn1: BatchNormCache,
    relu1: ReluCache,
    pool1: MaxPoolCache,
    conv2: Conv2dCache,
    bn2: BatchNormCache,
    relu2: ReluCache,
    pool2: MaxPoolCache,
    pooled_shape: Vec<usize>,
    dropout: DropoutCache,
    dense: DenseCache,
}

/// InputBatchNorm → [Conv2d → BatchNorm → ReLU → MaxPool] ×2 → Dropout →
/// Flatten → Dense(2), with its Adam state.
#[derive(Debug, Clone)]
pub struct Network {
    arch: ArchConfig,
    pool1: MaxPool2d,
    pool2: MaxPool2d,
    dropout: Dropout,
    pub(crate) layers: Layers,
    adam: AdamState,
}

struct Forward {
    logits: Tensor,
    cache: NetworkCache,
    /// Batchnorm layers with updated running statistics (train mode only).
    updated_bn: Option<[BatchNorm; 3]>,
}

impl Network {
    /// He-normal initialization. Draws, in order: conv1 weights, conv2
    /// weights, dense weights.
    pub fn new(arch: ArchConfig, adam: AdamConfig, rng: &mut Rng) -> Result<Self> {
        let shapes = arch.stage_shapes()?;
        let in_c = shapes[0].1[0];
        let c1 = &shapes[2].1;
        let conv1 = Conv2d::he_normal(
            in_c,
            arch.conv1_filters,
            arch.conv1_kernel[0],
            arch.conv1_kernel[1],
            rng,
        )?;
        let conv2 = Conv2d::he_normal(
            c1[0],
            arch.conv2_filters,
            arch.conv2_kernel[0],
            arch.conv2_kernel[1],
            rng,
        )?;
        let dense = Dense::he_normal(arch.flat_features()?, 2, rng)?;
        let layers = Layers {
            input_bn: BatchNorm::new(in_c, arch.bn_eps, arch.bn_momentum)?,
            conv1,
            bn1: BatchNorm::new(arch.conv1_filters, arch.bn_eps, arch.bn_momentum)?,
            conv2,
            bn2: BatchNorm::new(arch.conv2_filters, arch.bn_eps, arch.bn_momentum)?,
            dense,
        };
        Self::from_layers(arch, layers, adam)
    }

    pub(crate) fn from_layers(arch: ArchConfig, layers: Layers, adam: AdamConfig) -> Result<Self> {
        let adam = AdamState::new(adam, &layers.tensors()[..TRAINABLE]);
        Ok(Network {
            pool1: MaxPool2d::new(arch.pool1[0], arch.pool1[1])?,
            pool2: MaxPool2d::new(arch.pool2[0], arch.pool2[1])?,
            dropout: Dropout::new(arch.dropout)?,
            arch,
            layers,
            adam,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.config.lr = lr;
    }

    /// All stored tensors (trainable parameters then running statistics)
    /// with their checkpoint names.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        TENSOR_NAMES
            .iter()
            .copied()
            .zip(self.layers.tensors())
            .collect()
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        TENSOR_NAMES
            .iter()
            .copied()
            .zip(self.layers.tensors_mut())
            .collect()
    }

    /// Number of stored scalars, running statistics included.
    pub fn scalar_count(&self) -> usize {
        self.layers.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.layers.tensors()[..TRAINABLE]
            .iter()
            .map(|t| t.len())
            .sum()
    }

    /// Stacks `[1, s_f, 3]` (or `[s_f, 3]`) frames into a `[B, C, H, W]`
    /// batch in this network's input layout.
    pub fn stack_frames<'a, I>(&self, frames: I) -> Result<Tensor>
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let sf = self.arch.frame_len;
        let mut data = Vec::new();
        let mut count = 0;
        for f in frames {
            let ok = matches!(f.shape(), [1, h, SENSORS] | [h, SENSORS] if *h == sf);
            if !ok {
                return Err(Error::Shape(format!(
                    "frame {:?} does not match frame length {sf}",
                    f.shape()
                )));
            }
            match self.arch.layout {
                InputLayout::Width => data.extend_from_slice(f.data()),
                InputLayout::Channels => {
                    for s in 0..SENSORS {
                        data.extend(f.data().iter().skip(s).step_by(SENSORS));
                    }
                }
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Contract("no frames to stack".into()));
        }
        let [c, h, w] = self.arch.input_dims();
        Tensor::from_vec(&[count, c, h, w], data)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let dims = self.arch.input_dims();
        let ok = match x.shape() {
            [_, rest @ ..] if rest == dims => true,
            s => s == dims,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "network expects [B, {}, {}, {}], got {:?}",
                dims[0],
                dims[1],
                dims[2],
                x.shape()
            )))
        }
    }

    fn forward_impl(&self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Forward> {
        self.check_input(x)?;
        let single = x.rank() == 3;
        let x = if single {
            let mut s = vec![1];
            s.extend_from_slice(x.shape());
            x.clone().reshape(&s)?
        } else {
            x.clone()
        };
        let l = &self.layers;
        let mut bns = match mode {
            Mode::Train => Some([l.input_bn.clone(), l.bn1.clone(), l.bn2.clone()]),
            Mode::Eval => None,
        };
        let mut norm = |k: usize, t: &Tensor| -> Result<(Tensor, BatchNormCache)> {
            match &mut bns {
                Some(b) => b[k].forward_train(t),
                None => [&l.input_bn, &l.bn1, &l.bn2][k].forward_eval(t),
            }
        };

        let (h, bn0) = norm(0, &x)?;
        let (h, conv1) = l.conv1.forward(&h)?;
        let (h, bn1) = norm(1, &h)?;
        let (h, relu1) = relu(&h);
        let (h, pool1) = self.pool1.forward(&h)?;
        let (h, conv2) = l.conv2.forward(&h)?;
        let (h, bn2) = norm(2, &h)?;
        let (h, relu2) = relu(&h);
        let (h, pool2) = self.pool2.forward(&h)?;
        let pooled_shape = h.shape().to_vec();
        let (h, dropout) = self.dropout.forward(&h, mode, rng);
        let b = pooled_shape[0];
        let flat = h.reshape(&[b, self.arch.flat_features()?])?;
        let (logits, dense) = l.dense.forward(&flat)?;
        let logits = if single {
            logits.reshape(&[2])?
        } else {
            logits
        };
        logits.ensure_finite("network logits")?;
        Ok(Forward {
            logits,
            cache: NetworkCache {
                bn0,
                conv1,
                bn1,
                relu1,
                pool1,
                conv2,
                bn2,
                relu2,
                pool2,
                pooled_shape,
                dropout,
                dense,
            },
            updated_bn: bns,
        })
    }

    /// Forward pass with an explicit mode. Train mode updates the batchnorm
    /// running statistics and draws dropout masks from `rng`.
    pub fn forward(
        &mut self,
        x: &Tensor,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor, NetworkCache)> {
        let f = self.forward_impl(x, mode, rng)?;
        if let Some([b0, b1, b2]) = f.updated_bn {
            self.layers.input_bn = b0;
            self.layers.bn1 = b1;
            self.layers.bn2 = b2;
        }
        Ok((f.logits, f.cache))
    }

    /// Eval-mode logits: `[2]` for one frame, `[B, 2]` for a batch.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        // eval mode draws nothing from the generator
        let mut unused = Rng::new(0);
        Ok(self.forward_impl(x, Mode::Eval, &mut unused)?.logits)
    }

    /// Argmax label per frame of an eval-mode batch.
    pub fn classify(&self, x: &Tensor) -> Result<Vec<usize>> {
        let logits = self.predict(x)?;
        Ok(logits
            .data()
            .chunks_exact(2)
            .map(|z| usize::from(z[1] > z[0]))
            .collect())
    }

    /// Gradients of the trainable tensors, in `named_tensors` order.
    pub fn backward(&self, cache: &NetworkCache, dlogits: &Tensor) -> Result<Vec<Tensor>> {
        let l = &self.layers;
        let b = cache.pooled_shape[0];
        let dlogits = dlogits.clone().reshape(&[b, 2])?;
        let gd = l.dense.backward(&dlogits, &cache.dense)?;
        let g = gd.input.reshape(&cache.pooled_shape)?;
        let g = self.dropout.backward(&g, &cache.dropout)?;
        let g = self.pool2.backward(&g, &cache.pool2)?;
        let g = relu_backward(&g, &cache.relu2)?;
        let gbn2 = l.bn2.backward(&g, &cache.bn2)?;
        let gc2 = l.conv2.backward(&gbn2.input, &cache.conv2)?;
        let g = self.pool1.backward(&gc2.input, &cache.pool1)?;
        let g = relu_backward(&g, &cache.relu1)?;
        let gbn1 = l.bn1.backward(&g, &cache.bn1)?;
        let gc1 = l.conv1.backward(&gbn1.input, &cache.conv1)?;
        let gbn0 = l.input_bn.backward(&gc1.input, &cache.bn0)?;
        Ok(vec![
            gbn0.gamma, gbn0.beta, gc1.weight, gc1.bias, gbn1.gamma, gbn1.beta, gc2.weight,
            gc2.bias, gbn2.gamma, gbn2.beta, gd.weight, gd.bias,
        ])
    }

    /// One forward, backward and Adam update on a labeled batch; returns the
    /// mean loss before the update. On error nothing is modified.
    pub fn train_step(&mut self, batch: &Tensor, labels: &[usize], rng: &mut Rng) -> Result<f64> {
        let f = self.forward_impl(batch, Mode::Train, rng)?;
        let (loss, dlogits) = softmax_cross_entropy(&f.logits, labels)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss is {loss}")));
        }
        let grads = self.backward(&f.cache, &dlogits)?;
        let mut params: Vec<&mut Tensor> = self
            .layers
            .tensors_mut()
            .into_iter()
            .take(TRAINABLE)
            .collect();
        self.adam.step(&mut params, &grads)?;
        if let Some([b0, b1, b2]) = f.updated_bn {
            self.layers.input_bn.running_mean = b0.running_mean;
            self.layers.input_bn.running_var = b0.running_var;
            self.layers.bn1.running_mean = b1.running_mean;
            self.layers.bn1.running_var = b1.running_var;
            self.layers.bn2.running_mean = b2.running_mean;
            self.layers.bn2.running_var = b2.running_var;
        }
        Ok(loss)
    }

    /// Copies parameters and running statistics from `other` (same
    /// architecture), leaving this network's optimizer state alone.
    pub fn load_weights_from(&mut self, other: &Network) -> Result<()> {
        if other.arch != self.arch {
            return Err(Error::Model("architecture mismatch".into()));
        }
        self.layers = other.layers.clone();
        Ok(())
    }

    /// Same architecture and bit-identical stored tensors.
    pub fn same_weights(&self, other: &Network) -> bool {
        self.arch == other.arch && self.layers == other.layers
    }
}
