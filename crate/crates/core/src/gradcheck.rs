//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Central-difference estimate of the gradient of `f` at `x`.
pub fn numeric_gradient<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must be > 0, got {eps}"
        )));
    }
    let mut probe = x.clone();
    let mut grad = x.zeros_like();
    for i in 0..x.len() {
        let (plus, minus) = stencil(&mut f, &mut probe, i, eps)?;
        grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Objective at `x + h·e_i` and `x - h·e_i`; `probe` is restored afterwards.
fn stencil<F>(f: &mut F, probe: &mut Tensor, i: usize, h: f64) -> Result<(f64, f64)>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let orig = probe.data()[i];
    probe.data_mut()[i] = orig + h;
    let plus = f(probe);
    probe.data_mut()[i] = orig - h;
    let minus = f(probe);
    probe.data_mut()[i] = orig;
    let (plus, minus) = (plus?, minus?);
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::Numeric(format!(
            "objective not finite when perturbing element {i}"
        )));
    }
    Ok((plus, minus))
}

/// Largest elementwise relative error between a central-difference gradient
/// and `analytic`: `|g_fd - g_an| / max(1e-12, |g_fd| + |g_an|)`.
pub fn grad_check<F>(f: F, x: &Tensor, analytic: &Tensor, eps: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if analytic.shape() != x.shape() {
        return Err(Error::Shape(format!(
            "analytic gradient {:?} vs input {:?}",
            analytic.shape(),
            x.shape()
        )));
    }
    let fd = numeric_gradient(f, x, eps)?;
    Ok(max_relative_error(&fd, analytic))
}

pub fn max_relative_error(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| (p - q).abs() / f64::max(1e-12, p.abs() + q.abs()))
        .fold(0.0, f64::max)
}
