//! Dense row-major `f64` tensors.

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape("empty shape".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::InvalidShape(format!(
            "dimension {pos} of {shape:?} is zero"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], fill: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![fill; n],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, 0.0)
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// i.i.d. Gaussian samples; consumes `2 * ceil(n / 2)` uniforms from `rng`.
    pub fn randn(shape: &[usize], rng: &mut Rng, mean: f64, std: f64) -> Result<Self> {
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "standard deviation must be finite and >= 0, got {std}"
            )));
        }
        let mut t = Self::zeros(shape)?;
        rng.fill_normal(&mut t.data, mean, std);
        Ok(t)
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "index of rank {} into tensor of rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::Shape(format!(
                    "index {index:?} out of bounds for {:?}",
                    self.shape
                )));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::InvalidShape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|x| x * k)
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Errors if any element is NaN or infinite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "{what}: non-finite value {} at flat index {i}",
                self.data[i]
            ))),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
