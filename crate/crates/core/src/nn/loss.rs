use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Mean cross-entropy of softmax(logits) against integer labels, with the
/// gradient with respect to the logits (`(p - onehot) / B`).
///
/// `logits` is `[K]` (one sample) or `[B, K]`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = match *logits.shape() {
        [k] => (1, k),
        [b, k] => (b, k),
        ref s => {
            return Err(Error::Shape(format!(
                "logits must be [K] or [B, K], got {s:?}"
            )))
        }
    };
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    let mut grad = Vec::with_capacity(b * k);
    let mut loss = 0.0;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        if label >= k {
            return Err(Error::InvalidParameter(format!(
                "label {label} with {k} classes"
            )));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
        loss -= row[label] - max - log_total;
        for (j, &z) in row.iter().enumerate() {
            let p = (z - max - log_total).exp();
            grad.push((p - if j == label { 1.0 } else { 0.0 }) / b as f64);
        }
    }
    Ok((loss / b as f64, Tensor::from_vec(logits.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits() {
        let z = Tensor::zeros(&[2]).unwrap();
        for label in 0..2 {
            let (l, _) = softmax_cross_entropy(&z, &[label]).unwrap();
            assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_correct() {
        let z = Tensor::from_vec(&[2], vec![100.0, -100.0]).unwrap();
        let (l, g) = softmax_cross_entropy(&z, &[0]).unwrap();
        assert!((0.0..1e-80).contains(&l));
        assert!(g.data().iter().all(|v| v.abs() < 1e-80));
    }

    #[test]
    fn grad_check_batch() {
        let mut rng = Rng::new(5);
        let z = Tensor::randn(&[4, 2], &mut rng, 0.0, 2.0).unwrap();
        let labels = [0, 1, 1, 0];
        let (_, g) = softmax_cross_entropy(&z, &labels).unwrap();
        let err = grad_check(|t| Ok(softmax_cross_entropy(t, &labels)?.0), &z, &g, 1e-5).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn bad_label() {
        let z = Tensor::zeros(&[2]).unwrap();
        assert!(softmax_cross_entropy(&z, &[2]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(a in -700.0f64..700.0, b in -700.0f64..700.0) {
            let p = softmax(&[a, b]);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
