//! Central finite-difference checks of analytic backward passes.
//!
//! The probed scalar is `sum(upstream * output)` with a fixed pseudo-random
//! upstream tensor, so every output element contributes to the check.

use crate::error::Result;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

use super::activation::{activation_backward, activation_forward, ActivationKind};
use super::batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormState, BnMode};
use super::conv::{conv1d_backward, conv1d_forward, ConvLayerState};
use super::dense::{dense_backward, dense_forward, DenseLayerState};
use super::dropout::{dropout, dropout_backward, DropoutMode};
use super::loss::softmax_cross_entropy;
use super::pool::{pool1d_backward, pool1d_forward, PoolKind};

/// Gradients smaller than this are compared on an absolute scale of
/// `floor * tolerance`; below it, central-difference rounding dominates.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

const UPSTREAM_SEED: u64 = 0x6772_6164_6368_6b;

pub trait Differentiable {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>>;
    /// Input gradient plus one gradient vector per entry of `params_mut`.
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)>;
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        Vec::new()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

fn probe(layer: &impl Differentiable, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<f64> {
    let out = layer.forward(input)?;
    Ok(out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum())
}

/// Max relative error over every input element and parameter.
pub fn grad_check(layer: &mut impl Differentiable, input: &Tensor<f64>, h: f64) -> Result<f64> {
    check(layer, input, h, true)
}

/// Like [`grad_check`] but ignores the input gradient, for composites that
/// do not propagate to their input.
pub fn grad_check_params(layer: &mut impl Differentiable, input: &Tensor<f64>, h: f64) -> Result<f64> {
    check(layer, input, h, false)
}

fn check(layer: &mut impl Differentiable, input: &Tensor<f64>, h: f64, inputs: bool) -> Result<f64> {
    let out = layer.forward(input)?;
    let mut rng = SplitMix64::new(UPSTREAM_SEED);
    let upstream = Tensor::new(out.shape(), (0..out.len()).map(|_| rng.uniform(-1.0, 1.0)).collect())?;
    let (dx, dparams) = layer.backward(input, &upstream)?;

    let mut worst = 0.0f64;
    let mut x = input.clone();
    for i in (0..x.len()).filter(|_| inputs) {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let fp = probe(layer, &x, &upstream)?;
        x.data_mut()[i] = orig - h;
        let fm = probe(layer, &x, &upstream)?;
        x.data_mut()[i] = orig;
        worst = worst.max(relative_error(dx.data()[i], (fp - fm) / (2.0 * h)));
    }

    let counts: Vec<usize> = layer.params_mut().iter().map(|p| p.len()).collect();
    for (pi, &n) in counts.iter().enumerate() {
        for j in 0..n {
            let orig = layer.params_mut()[pi][j];
            layer.params_mut()[pi][j] = orig + h;
            let fp = probe(layer, input, &upstream)?;
            layer.params_mut()[pi][j] = orig - h;
            let fm = probe(layer, input, &upstream)?;
            layer.params_mut()[pi][j] = orig;
            worst = worst.max(relative_error(dparams[pi][j], (fp - fm) / (2.0 * h)));
        }
    }
    Ok(worst)
}

pub struct ConvProbe(pub ConvLayerState<f64>);

impl Differentiable for ConvProbe {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        conv1d_forward(input, &self.0)
    }
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)> {
        let g = conv1d_backward(input, &self.0, upstream)?;
        Ok((g.input, vec![g.kernels.into_data(), g.bias.into_data()]))
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.0.kernels.data_mut(), self.0.bias.data_mut()]
    }
}

pub struct DenseProbe(pub DenseLayerState<f64>);

impl Differentiable for DenseProbe {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        dense_forward(input, &self.0)
    }
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)> {
        let g = dense_backward(input, &self.0, upstream)?;
        Ok((g.input, vec![g.weights.into_data(), g.bias.into_data()]))
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.0.weights.data_mut(), self.0.bias.data_mut()]
    }
}

/// Training-mode batch norm.
pub struct BatchNormProbe(pub BatchNormState<f64>);

impl Differentiable for BatchNormProbe {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(batchnorm_forward(input, &self.0, BnMode::Train)?.output)
    }
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)> {
        let f = batchnorm_forward(input, &self.0, BnMode::Train)?;
        let g = batchnorm_backward(f.cache.as_ref().expect("train mode caches"), &self.0, upstream)?;
        Ok((g.input, vec![g.scale, g.offset]))
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.0.scale, &mut self.0.offset]
    }
}

pub struct ActivationProbe(pub ActivationKind);

impl Differentiable for ActivationProbe {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        Ok(activation_forward(input, self.0))
    }
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)> {
        Ok((activation_backward(input, self.0, upstream)?, Vec::new()))
    }
}

pub struct PoolProbe {
    pub width: usize,
    pub stride: usize,
    pub kind: PoolKind,
}

impl Differentiable for PoolProbe {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        pool1d_forward(input, self.width, self.stride, self.kind)
    }
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)> {
        Ok((pool1d_backward(input, self.width, self.stride, self.kind, upstream)?, Vec::new()))
    }
}

/// Scalar loss as a one-element output; input is the logit matrix.
pub struct SoftmaxCrossEntropyProbe {
    pub labels: Vec<usize>,
}

impl Differentiable for SoftmaxCrossEntropyProbe {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        Tensor::new(&[1], vec![softmax_cross_entropy(input, &self.labels)?.loss])
    }
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)> {
        let ce = softmax_cross_entropy(input, &self.labels)?;
        let u = upstream.data()[0];
        Ok((ce.logit_grad.map(|g| g * u), Vec::new()))
    }
}

/// Train-mode dropout with a mask fixed by `seed`.
pub struct DropoutProbe {
    pub rate: f64,
    pub seed: u64,
}

impl Differentiable for DropoutProbe {
    fn forward(&self, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut rng = SplitMix64::new(self.seed);
        Ok(dropout(input, self.rate, DropoutMode::Train, Some(&mut rng))?.0)
    }
    fn backward(&self, input: &Tensor<f64>, upstream: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Vec<f64>>)> {
        let mut rng = SplitMix64::new(self.seed);
        let (_, mask) = dropout(input, self.rate, DropoutMode::Train, Some(&mut rng))?;
        Ok((dropout_backward(upstream, mask.as_deref())?, Vec::new()))
    }
}
