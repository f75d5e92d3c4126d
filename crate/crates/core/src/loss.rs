use crate::error::{KanError, Result};
use crate::matrix::Matrix;

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot) / batch` with respect to the logits.
///
/// Each row is shifted by its maximum before exponentiating, so large logits
/// do not overflow.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let batch = logits.rows();
    let classes = logits.cols();
    if labels.len() != batch {
        return Err(KanError::shape(
            format!("{batch} labels"),
            format!("{} labels", labels.len()),
        ));
    }
    if batch == 0 {
        return Err(KanError::shape("non-empty batch", "0 rows"));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(KanError::Label {
            label,
            n_classes: classes,
        });
    }
    if !logits.all_finite() {
        return Err(KanError::Numeric("non-finite logits".into()));
    }

    let inv_batch = 1.0 / batch as f64;
    let mut grad = Matrix::zeros(batch, classes);
    let mut total = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let z = logits.row(b);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g = grad.row_mut(b);
        let mut denom = 0.0;
        for (gi, &zi) in g.iter_mut().zip(z) {
            let e = (zi - max).exp();
            *gi = e;
            denom += e;
        }
        total += denom.ln() - (z[label] - max);
        for gi in g.iter_mut() {
            *gi = *gi / denom * inv_batch;
        }
        g[label] -= inv_batch;
    }
    Ok((total * inv_batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_tensor;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Matrix::zeros(3, 10);
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        for r in 0..3 {
            assert!(grad.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn huge_true_logit_does_not_overflow() {
        let logits = Matrix::from_rows(&[vec![0.0, 1000.0, -3.0]]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.all_finite());
        let (wrong, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((wrong - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn label_errors() {
        let logits = Matrix::zeros(2, 3);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 3]),
            Err(KanError::Label {
                label: 3,
                n_classes: 3
            })
        ));
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0]),
            Err(KanError::Shape { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut values = vec![
            0.3, -1.2, 2.0, 0.0, 0.5, 0.5, -0.7, 1.1, 3.0, -2.0, 0.25, 0.9,
        ];
        let labels = [2, 0, 1, 1];
        let logits = Matrix::from_vec(4, 3, values.clone()).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let r = check_tensor(&mut values, grad.as_slice(), 1e-5, 0.0, 1e-6, |v| {
            softmax_cross_entropy(&Matrix::from_vec(4, 3, v.to_vec()).unwrap(), &labels)
                .unwrap()
                .0
        });
        assert!(r.passed(), "{r:?}");
    }
}
