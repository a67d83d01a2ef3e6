use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone)]
pub struct SoftmaxCrossEntropy {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    pub probs: Tensor,
    /// `(probs - onehot) / N`
    pub grad_logits: Tensor,
}

pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxCrossEntropy> {
    if logits.rank() != 2 || logits.rows() != labels.len() {
        return Err(Error::shape(
            "softmax cross-entropy",
            format!("logits {:?} for {} labels", logits.shape(), labels.len()),
        ));
    }
    let (n, classes) = (logits.rows(), logits.row_len());
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut probs = Tensor::zeros(logits.shape());
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
        total += log_z - row[label];
        let p = softmax(row);
        for (c, (&pv, g)) in p.iter().zip(grad.row_mut(r)).enumerate() {
            *g = (pv - if c == label { 1.0 } else { 0.0 }) * inv_n;
        }
        probs.row_mut(r).copy_from_slice(&p);
    }
    Ok(SoftmaxCrossEntropy {
        loss: total * inv_n,
        probs,
        grad_logits: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits() {
        let out = softmax_cross_entropy(&Tensor::zeros(&[1, 7]), &[3]).unwrap();
        assert!(out.probs.data().iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
        assert!((out.loss - 7f64.ln()).abs() < 1e-12);
        assert!((out.loss - 1.9459).abs() < 1e-4);
    }

    #[test]
    fn confident_logit_has_vanishing_loss() {
        let mut logits = Tensor::zeros(&[1, 7]);
        logits.row_mut(0)[2] = 50.0;
        let out = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(out.loss < 1e-9);
        assert!((out.probs.row(0)[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 7]), &[7]).is_err());
        assert!(softmax_cross_entropy(&Tensor::zeros(&[2, 7]), &[0]).is_err());
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::from_rows(&[vec![1000.0, -1000.0, 0.0]]).unwrap();
        let out = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(out.loss.is_finite() && out.probs.is_finite());
        assert!((out.loss - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let logits = Tensor::new(vec![4, 7], (0..28).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let labels = [0, 6, 3, 3];
        let out = softmax_cross_entropy(&logits, &labels).unwrap();
        let eps = 1e-5;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += eps;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= eps;
            let numeric = (softmax_cross_entropy(&plus, &labels).unwrap().loss
                - softmax_cross_entropy(&minus, &labels).unwrap().loss)
                / (2.0 * eps);
            let analytic = out.grad_logits.data()[i];
            let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-6 || (numeric - analytic).abs() < 1e-10, "{i}: {numeric} vs {analytic}");
        }
    }
}
