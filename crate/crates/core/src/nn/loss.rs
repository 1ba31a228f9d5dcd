use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct CrossEntropy<T> {
    /// Mean over the batch of `-ln p[label]`.
    pub loss: f64,
    pub probs: Tensor<T>,
    /// `(probs - one_hot) / batch`.
    pub logit_grad: Tensor<T>,
}

fn rows<T: Real>(logits: &Tensor<T>) -> Result<(usize, usize)> {
    match logits.shape() {
        [k] => Ok((1, *k)),
        [b, k] => Ok((*b, *k)),
        s => Err(Error::shape(format!("logits must be [batch, classes], got {s:?}"))),
    }
}

/// Exponential softmax with the row maximum subtracted.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, k) = rows(logits)?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let start = out.len();
        let mut sum = T::zero();
        for &z in row {
            let e = (z - m).exp();
            sum = sum + e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p = *p / sum;
        }
    }
    Tensor::new(logits.shape(), out)
}

pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<CrossEntropy<T>> {
    let (b, k) = rows(logits)?;
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0;
    let inv_b = T::one() / T::of_usize(b);
    let mut grad = Vec::with_capacity(logits.len());
    for ((zrow, prow), &y) in logits.data().chunks_exact(k).zip(probs.data().chunks_exact(k)).zip(labels) {
        // log-sum-exp form keeps the loss finite when p[label] underflows
        let m = zrow.iter().fold(f64::NEG_INFINITY, |a, b| a.max(b.f64()));
        let lse = m + zrow.iter().map(|z| (z.f64() - m).exp()).sum::<f64>().ln();
        loss += lse - zrow[y].f64();
        for (j, &p) in prow.iter().enumerate() {
            let t = if j == y { T::one() } else { T::zero() };
            grad.push((p - t) * inv_b);
        }
    }
    Ok(CrossEntropy {
        loss: loss / b as f64,
        probs,
        logit_grad: Tensor::new(logits.shape(), grad)?,
    })
}

/// Index of the largest entry; the lowest index wins exact ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let z = Tensor::<f64>::from_f64(&[1, 5], &[0.3; 5]).unwrap();
        let ce = softmax_cross_entropy(&z, &[2]).unwrap();
        assert!(ce.probs.data().iter().all(|&p| (p - 0.2f64).abs() < 1e-15));
        assert!((ce.loss - 5f64.ln()).abs() < 1e-12);
        assert!((ce.loss - 1.60944).abs() < 1e-5);
    }

    #[test]
    fn confident_prediction_has_near_zero_loss() {
        let z = Tensor::<f64>::from_f64(&[1, 3], &[100.0, -100.0, -100.0]).unwrap();
        let ce = softmax_cross_entropy(&z, &[0]).unwrap();
        assert!(ce.loss < 1e-40);
        let wrong = softmax_cross_entropy(&z, &[1]).unwrap();
        assert!((wrong.loss - 200.0).abs() < 1e-9);
    }

    #[test]
    fn shift_invariance() {
        let z = Tensor::<f64>::from_f64(&[2, 3], &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]).unwrap();
        let shifted = Tensor::<f64>::from_f64(&[2, 3], &[8.0, 9.0, 7.5, -1001.0, -1000.0, -997.0]).unwrap();
        let a = softmax_cross_entropy(&z, &[1, 2]).unwrap();
        let b = softmax_cross_entropy(&shifted, &[1, 2]).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        for (p, q) in a.probs.data().iter().zip(b.probs.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_is_probs_minus_one_hot_over_batch() {
        let z = Tensor::<f64>::from_f64(&[2, 2], &[0.0, 0.0, 1.0, -1.0]).unwrap();
        let ce = softmax_cross_entropy(&z, &[0, 1]).unwrap();
        let g = ce.logit_grad.data();
        assert!((g[0] + 0.25).abs() < 1e-15 && (g[1] - 0.25).abs() < 1e-15);
        let p = ce.probs.data();
        assert!((g[2] - p[2] / 2.0).abs() < 1e-15 && (g[3] - (p[3] - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bad_label_rejected() {
        let z = Tensor::<f64>::from_f64(&[1, 3], &[0.0; 3]).unwrap();
        assert!(softmax_cross_entropy(&z, &[3]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_tie() {
        assert_eq!(argmax(&[0.2f64, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5f64, 0.5]), 0);
    }
}
