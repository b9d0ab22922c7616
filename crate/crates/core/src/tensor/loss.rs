use super::{Result, Scalar, Tensor, TensorError};

fn check_targets<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    if logits.rank() != 2 {
        return Err(TensorError::Rank {
            op: "softmax_xent",
            expected: 2,
            shape: logits.shape().to_vec(),
        });
    }
    if logits.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_xent",
            lhs: logits.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let n = logits.shape()[1];
    if n < 2 {
        return Err(TensorError::Invalid {
            op: "softmax_xent",
            msg: format!("need at least 2 classes, got {n}"),
        });
    }
    for row in target.data().chunks(n) {
        let ones = row.iter().filter(|&&v| v == T::one()).count();
        let zeros = row.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || ones + zeros != n {
            return Err(TensorError::Invalid {
                op: "softmax_xent",
                msg: "target rows must be one-hot".into(),
            });
        }
    }
    Ok(())
}

/// Mean over the batch of `-Σ_k y_k log softmax(z)_k`, with the row maximum
/// subtracted before exponentiation.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    check_targets(logits, target)?;
    let batch = logits.shape()[0];
    // The shift is a constant: log-sum-exp is shift invariant, so detaching it
    // leaves every derivative exact.
    let shifted = logits.sub(&logits.row_max()?)?;
    let lse = shifted.exp()?.sum_to(&[batch, 1])?.log()?;
    let log_prob = shifted.sub(&lse)?;
    let inv_batch = T::one() / T::from_f64(batch as f64);
    log_prob.mul(&target.detach())?.sum()?.scale(-inv_batch)
}

/// Cross-entropy of the temperature-scaled softmax `softmax(z / T)`.
///
/// `T = 1` goes through exactly the same arithmetic as
/// [`softmax_cross_entropy`] (scaling by 1 is exact).
pub fn softmax_xent_temperature<T: Scalar>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    temperature: f64,
) -> Result<Tensor<T>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(TensorError::Invalid {
            op: "softmax_xent_temperature",
            msg: format!("temperature must be positive, got {temperature}"),
        });
    }
    check_targets(logits, target)?;
    let scaled = logits.scale(T::from_f64(1.0 / temperature))?;
    softmax_cross_entropy(&scaled, target)
}

/// Unaveraged sum of squared differences.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "mse_loss",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let d = pred.sub(target)?;
    d.mul(&d)?.sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64], s: &[usize]) -> Tensor<f64> {
        Tensor::from_f64(v, s).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let l = softmax_xent_temperature(&t(&[0.0, 0.0], &[1, 2]), &t(&[1.0, 0.0], &[1, 2]), 1.0).unwrap();
        assert!((l.item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn closed_form_single_logit() {
        let l = softmax_xent_temperature(&t(&[1.0, 0.0], &[1, 2]), &t(&[1.0, 0.0], &[1, 2]), 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((l.item() - expected).abs() < 1e-12);
        assert!((l.item() - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn huge_temperature_tends_to_ln_n() {
        let z = t(&[3.0, -1.0, 0.5, 7.0, 2.0, -4.0], &[2, 3]);
        let y = t(&[0.0, 1.0, 0.0, 1.0, 0.0, 0.0], &[2, 3]);
        let l = softmax_xent_temperature(&z, &y, 1e6).unwrap();
        assert!((l.item() - 3f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn temperature_errors() {
        let z = t(&[0.0, 0.0], &[1, 2]);
        let y = t(&[1.0, 0.0], &[1, 2]);
        assert!(softmax_xent_temperature(&z, &y, 0.0).is_err());
        assert!(softmax_xent_temperature(&z, &y, -1.0).is_err());
        assert!(softmax_xent_temperature(&z, &t(&[0.5, 0.5], &[1, 2]), 1.0).is_err());
        assert!(softmax_xent_temperature(&z, &t(&[1.0, 0.0, 0.0], &[1, 3]), 1.0).is_err());
        assert!(softmax_xent_temperature(&t(&[0.0], &[1, 1]), &t(&[1.0], &[1, 1]), 1.0).is_err());
    }

    #[test]
    fn mse_examples() {
        let p = t(&[1.0, 0.0], &[2]);
        assert_eq!(mse_loss(&p, &p).unwrap().item(), 0.0);
        assert_eq!(mse_loss(&p, &t(&[0.0, 1.0], &[2])).unwrap().item(), 2.0);
        assert!(mse_loss(&p, &t(&[0.0], &[1])).is_err());
    }
}
