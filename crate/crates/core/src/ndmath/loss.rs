use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "mse_loss",
            format!("{:?}", pred.shape()),
            format!("{:?}", target.shape()),
        ));
    }
    let n = T::of(pred.len().max(1) as f64);
    let two = T::of(2.0);
    let mut loss = T::zero();
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            two * d / n
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Numerically stabilised softmax of one row of logits.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / s).collect()
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot(label)`.
pub fn cross_entropy_loss<T: Scalar>(logits: &Tensor<T>, label_index: usize) -> Result<(T, Tensor<T>)> {
    let z = logits.data();
    if label_index >= z.len() {
        return Err(Error::Index {
            index: label_index,
            len: z.len(),
        });
    }
    let logp = log_softmax(z);
    let mut grad: Vec<T> = logp.iter().map(|&l| l.exp()).collect();
    grad[label_index] -= T::one();
    Ok((-logp[label_index], Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor<f64> {
        Tensor::vector(x.to_vec())
    }

    #[test]
    fn mse_examples() {
        let (l, _) = mse_loss(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert_eq!(l, 0.5);
        let (l, g) = mse_loss(&v(&[0.3, -2.0]), &v(&[0.3, -2.0])).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
        // ((0.8)^2 + (0.9)^2) / 2
        let (l, g) = mse_loss(&v(&[0.2, 0.9]), &v(&[1.0, 0.0])).unwrap();
        assert!((l - 0.725).abs() < 1e-15);
        assert!((g.data()[0] - (-0.8)).abs() < 1e-15);
        assert!((g.data()[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn mse_shape_mismatch() {
        assert!(matches!(
            mse_loss(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, _) = cross_entropy_loss(&v(&[0.3; 10]), 7).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        let (l, _) = cross_entropy_loss(&v(&[20.0, -20.0]), 0).unwrap();
        assert!(l.abs() < 1e-8);
        // direct softmax: -ln(e^3 / (e^1 + e^2 + e^3))
        let direct = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln();
        let (l, _) = cross_entropy_loss(&v(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert!((l - direct).abs() < 1e-12);
        assert!((l - 0.40761).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        assert!(matches!(
            cross_entropy_loss(&v(&[1.0, 2.0]), 2),
            Err(Error::Index { index: 2, len: 2 })
        ));
    }

    #[test]
    fn softmax_sums_to_one_for_large_logits() {
        let p = softmax(&[50.0, -50.0, 3.0, 49.9]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
