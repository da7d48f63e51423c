use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct CrossEntropy {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    pub probs: Tensor,
    /// `(probs - onehot) / n`
    pub grad_logits: Tensor,
}

/// Softmax over each row of `(n, K)` logits followed by mean cross-entropy.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<CrossEntropy> {
    let n = logits.shape().n;
    let k = logits.shape().item_len();
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{n} labels"),
            format!("{} labels", labels.len()),
        ));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut loss = 0.0;
    for (i, (row, &label)) in logits.data().chunks_exact(k).zip(labels).enumerate() {
        if label >= k {
            return Err(Error::LabelOutOfRange {
                index: i,
                label,
                classes: k,
            });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() - (row[label] - max);
        probs.extend(exps.iter().map(|e| e / z));
    }
    let scale = 1.0 / n as f64;
    let mut grad = probs.clone();
    for (row, &label) in grad.chunks_exact_mut(k).zip(labels) {
        row[label] -= 1.0;
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Ok(CrossEntropy {
        loss: loss * scale,
        probs: Tensor::from_vec(Shape::matrix(n, k), probs)?,
        grad_logits: Tensor::from_vec(Shape::matrix(n, k), grad)?,
    })
}

/// Row-wise argmax, first index on ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape().item_len();
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference_gradient, max_relative_error};
    use crate::rng::{seeded, uniform_tensor};

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::filled(Shape::matrix(3, 7), 0.3);
        let ce = softmax_cross_entropy(&logits, &[0, 3, 6]).unwrap();
        assert!((ce.loss - 7f64.ln()).abs() < 1e-12);
        assert!(ce.probs.data().iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn saturated_true_class() {
        let mut logits = Tensor::zeros(Shape::matrix(1, 4));
        logits.data_mut()[2] = 1e4;
        let ce = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(ce.loss.abs() < 1e-12);
        assert!(ce.grad_logits.data().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor::zeros(Shape::matrix(2, 3));
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 3]),
            Err(Error::LabelOutOfRange { index: 1, label: 3, classes: 3 })
        ));
    }

    #[test]
    fn rows_sum_to_one_and_grad_matches_fd() {
        let mut rng = seeded(12);
        let logits = uniform_tensor(&mut rng, Shape::matrix(4, 5), -3.0, 3.0);
        let labels = [1, 0, 4, 2];
        let ce = softmax_cross_entropy(&logits, &labels).unwrap();
        for row in ce.probs.data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert!(ce.loss >= 0.0);
        let numeric = finite_difference_gradient(
            |t| softmax_cross_entropy(t, &labels).unwrap().loss,
            &logits,
            1e-5,
        );
        assert!(max_relative_error(ce.grad_logits.data(), numeric.data()) < 1e-4);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let t = Tensor::from_vec(Shape::matrix(2, 3), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![0, 1]);
    }
}
