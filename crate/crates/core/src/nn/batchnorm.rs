//! Per-channel batch normalization with adaptive (test-batch) statistics.
//!
//! Training normalizes with the current batch's population mean and variance
//! over batch x length. Every forward pass in `Train` or `Accumulate` mode
//! returns its batch statistics, and callers fold them into the state's
//! accumulators. `AdaptEval` normalizes with the arithmetic average of the
//! accumulated per-batch means and variances. Re-accumulating over test
//! batches before classifying is what makes the layer adaptive.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics, requires batch size >= 2, caches for backward.
    Train,
    /// Batch statistics without a gradient cache; any batch size.
    Accumulate,
    /// Averaged accumulated statistics; parameters and accumulators untouched.
    AdaptEval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub scale: Vec<T>,
    pub offset: Vec<T>,
    pub epsilon: f64,
    pub accumulated_means: Vec<T>,
    pub accumulated_vars: Vec<T>,
    pub batch_count: usize,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    shape: Vec<usize>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BnForward<T> {
    pub output: Tensor<T>,
    /// Empty in `AdaptEval` mode.
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
    pub cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub scale: Vec<T>,
    pub offset: Vec<T>,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self::with_epsilon(channels, DEFAULT_EPSILON).expect("default epsilon is valid")
    }

    pub fn with_epsilon(channels: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("batch-norm epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(BatchNormState {
            scale: vec![T::one(); channels],
            offset: vec![T::zero(); channels],
            epsilon,
            accumulated_means: vec![T::zero(); channels],
            accumulated_vars: vec![T::zero(); channels],
            batch_count: 0,
        })
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn reset_statistics(&mut self) {
        self.accumulated_means.iter_mut().for_each(|m| *m = T::zero());
        self.accumulated_vars.iter_mut().for_each(|v| *v = T::zero());
        self.batch_count = 0;
    }

    pub fn accumulate(&mut self, mean: &[T], var: &[T]) -> Result<()> {
        if mean.len() != self.channels() || var.len() != self.channels() {
            return Err(Error::shape("batch statistics do not match channel count"));
        }
        for (a, &m) in self.accumulated_means.iter_mut().zip(mean) {
            *a = *a + m;
        }
        for (a, &v) in self.accumulated_vars.iter_mut().zip(var) {
            *a = *a + v;
        }
        self.batch_count += 1;
        Ok(())
    }

    pub fn averaged_statistics(&self) -> Result<(Vec<T>, Vec<T>)> {
        if self.batch_count == 0 {
            return Err(Error::NoAdaptationStatistics);
        }
        let n = T::of_usize(self.batch_count);
        Ok((
            self.accumulated_means.iter().map(|&m| m / n).collect(),
            self.accumulated_vars.iter().map(|&v| v / n).collect(),
        ))
    }
}

pub fn batchnorm_forward<T: Real>(input: &Tensor<T>, state: &BatchNormState<T>, mode: BnMode) -> Result<BnForward<T>> {
    let (b, l, c) = if input.rank() == 2 {
        // [batch, features]
        let s = input.shape();
        (s[0], 1, s[1])
    } else {
        input.blc()
    };
    if c != state.channels() {
        return Err(Error::shape(format!(
            "batch norm over {} channels got input with {c}",
            state.channels()
        )));
    }
    if mode == BnMode::Train && b < 2 {
        return Err(Error::shape(format!("training-mode batch norm needs batch size >= 2, got {b}")));
    }
    let x = input.data();
    let n = b * l;
    let (mean, var) = match mode {
        BnMode::AdaptEval => state.averaged_statistics()?,
        _ => {
            let mut sum = vec![0.0f64; c];
            for row in x.chunks_exact(c) {
                for (s, &v) in sum.iter_mut().zip(row) {
                    *s += v.f64();
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
            let mut sq = vec![0.0f64; c];
            for row in x.chunks_exact(c) {
                for ((s, &v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    let d = v.f64() - m;
                    *s += d * d;
                }
            }
            (
                mean.iter().map(|&m| T::of(m)).collect(),
                sq.iter().map(|s| T::of(s / n as f64)).collect(),
            )
        }
    };
    let eps = T::of(state.epsilon);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut out = Vec::with_capacity(x.len());
    let keep_cache = mode == BnMode::Train;
    let mut xhat = if keep_cache { Vec::with_capacity(x.len()) } else { Vec::new() };
    for row in x.chunks_exact(c) {
        for ch in 0..c {
            let h = (row[ch] - mean[ch]) * inv_std[ch];
            if keep_cache {
                xhat.push(h);
            }
            out.push(state.scale[ch] * h + state.offset[ch]);
        }
    }
    let output = Tensor::new(input.shape(), out)?;
    output.ensure_finite("batch-norm output")?;
    let cache = keep_cache.then(|| BnCache {
        shape: input.shape().to_vec(),
        xhat,
        inv_std,
    });
    let (batch_mean, batch_var) = if mode == BnMode::AdaptEval { (Vec::new(), Vec::new()) } else { (mean, var) };
    Ok(BnForward {
        output,
        batch_mean,
        batch_var,
        cache,
    })
}

/// Adjoint of the training-mode transform, including the dependence of the
/// batch mean and variance on every input.
pub fn batchnorm_backward<T: Real>(cache: &BnCache<T>, state: &BatchNormState<T>, upstream: &Tensor<T>) -> Result<BnGrads<T>> {
    if upstream.shape() != cache.shape.as_slice() {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match batch-norm input {:?}",
            upstream.shape(),
            cache.shape
        )));
    }
    let c = state.channels();
    let g = upstream.data();
    let n = g.len() / c;
    let mut dbeta = vec![T::zero(); c];
    let mut dgamma = vec![T::zero(); c];
    for (grow, hrow) in g.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for ch in 0..c {
            dbeta[ch] = dbeta[ch] + grow[ch];
            dgamma[ch] = dgamma[ch] + grow[ch] * hrow[ch];
        }
    }
    let nt = T::of_usize(n);
    let coef: Vec<T> = (0..c).map(|ch| state.scale[ch] * cache.inv_std[ch] / nt).collect();
    let mut dx = Vec::with_capacity(g.len());
    for (grow, hrow) in g.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for ch in 0..c {
            dx.push(coef[ch] * (nt * grow[ch] - dbeta[ch] - hrow[ch] * dgamma[ch]));
        }
    }
    Ok(BnGrads {
        input: Tensor::new(&cache.shape, dx)?,
        scale: dgamma,
        offset: dbeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_values_hand_computed() {
        let st = BatchNormState::<f64>::with_epsilon(1, 0.0).unwrap();
        let x = Tensor::from_f64(&[3, 1, 1], &[1.0, 2.0, 3.0]).unwrap();
        let y = batchnorm_forward(&x, &st, BnMode::Train).unwrap();
        let e = (1.5f64).sqrt();
        for (a, b) in y.output.data().iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((y.output.data()[0] + 1.224_744_871).abs() < 1e-9);
    }

    #[test]
    fn eval_without_statistics_rejected() {
        let st = BatchNormState::<f64>::new(2);
        let x = Tensor::<f64>::zeros(&[2, 3, 2]).unwrap();
        assert!(matches!(batchnorm_forward(&x, &st, BnMode::AdaptEval), Err(Error::NoAdaptationStatistics)));
    }

    #[test]
    fn train_needs_two_samples() {
        let st = BatchNormState::<f64>::new(1);
        let x = Tensor::from_f64(&[1, 3, 1], &[1.0, 2.0, 3.0]).unwrap();
        assert!(batchnorm_forward(&x, &st, BnMode::Train).is_err());
        assert!(batchnorm_forward(&x, &st, BnMode::Accumulate).is_ok());
    }

    #[test]
    fn one_batch_adapt_equals_train() {
        let mut st = BatchNormState::<f64>::new(2);
        st.scale = vec![1.5, 0.5];
        st.offset = vec![0.1, -0.2];
        let data: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 1.3 * i as f64).collect();
        let x = Tensor::from_f64(&[2, 3, 2], &data).unwrap();
        let train = batchnorm_forward(&x, &st, BnMode::Train).unwrap();
        st.accumulate(&train.batch_mean, &train.batch_var).unwrap();
        let eval = batchnorm_forward(&x, &st, BnMode::AdaptEval).unwrap();
        for (a, b) in train.output.data().iter().zip(eval.output.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn averages_across_batches() {
        let mut st = BatchNormState::<f64>::new(1);
        st.accumulate(&[1.0], &[4.0]).unwrap();
        st.accumulate(&[3.0], &[2.0]).unwrap();
        assert_eq!(st.averaged_statistics().unwrap(), (vec![2.0], vec![3.0]));
        st.reset_statistics();
        assert_eq!(st.batch_count, 0);
        assert_eq!(st.accumulated_means, vec![0.0]);
    }

    #[test]
    fn offset_grad_is_upstream_sum() {
        let st = BatchNormState::<f64>::new(2);
        let data: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let x = Tensor::from_f64(&[2, 4, 2], &data).unwrap();
        let f = batchnorm_forward(&x, &st, BnMode::Train).unwrap();
        let up: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).cos()).collect();
        let g = batchnorm_backward(f.cache.as_ref().unwrap(), &st, &Tensor::from_f64(&[2, 4, 2], &up).unwrap()).unwrap();
        let s0: f64 = up.iter().step_by(2).sum();
        let s1: f64 = up.iter().skip(1).step_by(2).sum();
        assert!((g.offset[0] - s0).abs() < 1e-12 && (g.offset[1] - s1).abs() < 1e-12);

        let zero = batchnorm_backward(f.cache.as_ref().unwrap(), &st, &Tensor::zeros(&[2, 4, 2]).unwrap()).unwrap();
        assert!(zero.input.data().iter().chain(&zero.scale).chain(&zero.offset).all(|&v| v == 0.0));
    }

    #[test]
    fn negative_epsilon_rejected() {
        assert!(BatchNormState::<f64>::with_epsilon(1, -1e-3).is_err());
    }
}
