//! Executable network built from an [`ArchitectureSpec`].

use crate::error::{Error, Result};
use crate::nn::batchnorm::BnCache;
use crate::nn::dropout::DropoutMode;
use crate::nn::init::he_uniform;
use crate::nn::{
    activation_backward, activation_forward, batchnorm_backward, batchnorm_forward, dense_backward, dense_forward, dropout,
    dropout_backward, pool1d_backward, pool1d_forward, softmax, ActivationKind, BatchNormState, BnMode, ConvLayerState,
    DenseLayerState, ParamMut, PoolKind,
};
use crate::rng::SplitMix64;
use crate::tensor::{Real, Tensor};

use super::spec::{ArchitectureSpec, LayerSpec, Shape};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Dropout { rate: f64 },
    MultiConv { branches: Vec<ConvLayerState<T>> },
    Conv(ConvLayerState<T>),
    BatchNorm(BatchNormState<T>),
    Activation(ActivationKind),
    MaxPool { width: usize, stride: usize },
    Concat,
    Flatten,
    Dense { layer: DenseLayerState<T>, activation: ActivationKind },
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Dropout active, batch statistics, gradient caches kept.
    Train,
    /// Dropout off, batch statistics reported for accumulation.
    Accumulate,
    /// Dropout off, averaged accumulated statistics.
    Eval,
}

#[derive(Clone, Debug)]
enum Cache<T> {
    None,
    Mask(Option<Vec<T>>),
    Bn(BnCache<T>),
    Dense(Tensor<T>),
}

/// Per-channel statistics of one batch-norm layer for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats<T> {
    pub layer: usize,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Result of a forward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// Input of every layer; only populated in train mode.
    inputs: Vec<Tensor<T>>,
    caches: Vec<Cache<T>>,
    /// Input of the softmax layer.
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
    pub bn_stats: Vec<BnStats<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub spec: ArchitectureSpec,
    pub layers: Vec<Layer<T>>,
}

fn seq_channels(shape: Shape) -> usize {
    match shape {
        Shape::Seq { channels, .. } => channels,
        Shape::Flat { features } => features,
    }
}

impl<T: Real> Network<T> {
    /// He-uniform weights, zero biases, unit-scale batch norm; all draws from
    /// one generator seeded by `seed`.
    pub fn init(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = SplitMix64::derive(seed, 0x6e65_7477);
        let mut prev = spec.input_shape();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (ls, &shape) in spec.layers.iter().zip(&shapes) {
            let cin = seq_channels(prev);
            let layer = match ls {
                LayerSpec::Dropout { rate } => Layer::Dropout { rate: *rate },
                LayerSpec::MultiConv {
                    widths,
                    stride,
                    kernels_per_width,
                    padding,
                } => {
                    let mut branches = Vec::with_capacity(widths.len());
                    for &w in widths {
                        let mut c = ConvLayerState::zeros(w, cin, *kernels_per_width, *stride, *padding)?;
                        let n = c.kernels.len();
                        c.kernels.data_mut().copy_from_slice(&he_uniform(n, w * cin, &mut rng));
                        branches.push(c);
                    }
                    Layer::MultiConv { branches }
                }
                LayerSpec::Conv {
                    width,
                    stride,
                    channels,
                    padding,
                } => {
                    let mut c = ConvLayerState::zeros(*width, cin, *channels, *stride, *padding)?;
                    let n = c.kernels.len();
                    c.kernels.data_mut().copy_from_slice(&he_uniform(n, width * cin, &mut rng));
                    Layer::Conv(c)
                }
                LayerSpec::Batchnorm => Layer::BatchNorm(BatchNormState::new(seq_channels(shape))),
                LayerSpec::Activation { function } => Layer::Activation(*function),
                LayerSpec::Maxpool { width, stride } => Layer::MaxPool {
                    width: *width,
                    stride: *stride,
                },
                LayerSpec::Concat => Layer::Concat,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { units, activation } => {
                    let n_in = prev.size();
                    let mut d = DenseLayerState::zeros(n_in, *units)?;
                    let n = d.weights.len();
                    d.weights.data_mut().copy_from_slice(&he_uniform(n, n_in, &mut rng));
                    Layer::Dense {
                        layer: d,
                        activation: *activation,
                    }
                }
                LayerSpec::Softmax => Layer::Softmax,
            };
            layers.push(layer);
            prev = shape;
        }
        Ok(Network {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn input_length(&self) -> usize {
        self.spec.input_length
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Wraps `count` consecutive windows as a `[count, length, 1]` batch.
    pub fn batch_from(&self, windows: &[f32]) -> Result<Tensor<T>> {
        let l = self.input_length();
        if windows.is_empty() || windows.len() % l != 0 {
            return Err(Error::shape(format!(
                "{} samples is not a whole number of length-{l} windows",
                windows.len()
            )));
        }
        Tensor::new(&[windows.len() / l, l, 1], windows.iter().map(|&v| T::of(v as f64)).collect())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        match x.shape() {
            [_, l, 1] if *l == self.input_length() => Ok(()),
            s => Err(Error::shape(format!(
                "network expects [batch, {}, 1] input, got {s:?}",
                self.input_length()
            ))),
        }
    }

    /// Runs layers `0..=last` and returns the output of layer `last`.
    pub fn forward_to(&self, x: &Tensor<T>, last: usize) -> Result<Tensor<T>> {
        if last >= self.layers.len() {
            return Err(Error::invalid(format!(
                "layer index {last} out of range for {} layers",
                self.layers.len()
            )));
        }
        self.check_input(x)?;
        let mut cur = x.clone();
        for i in 0..=last {
            cur = self.step(i, &cur, RunMode::Eval, None)?.0;
        }
        Ok(cur)
    }

    /// Full pass. `rng` drives dropout and is required in train mode when
    /// the network has a non-zero dropout rate.
    pub fn forward(&self, x: &Tensor<T>, mode: RunMode, mut rng: Option<&mut SplitMix64>) -> Result<Trace<T>> {
        self.check_input(x)?;
        let keep = mode == RunMode::Train;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(if keep { n } else { 0 });
        let mut caches = Vec::with_capacity(n);
        let mut bn_stats = Vec::new();
        let mut cur = x.clone();
        let mut logits = None;
        for i in 0..n {
            if i == n - 1 {
                logits = Some(cur.clone());
            }
            let (next, cache, stats) = self.step(i, &cur, mode, rng.as_deref_mut())?;
            if let Some((mean, var)) = stats {
                bn_stats.push(BnStats { layer: i, mean, var });
            }
            caches.push(cache);
            if keep {
                inputs.push(cur);
            }
            cur = next;
        }
        cur.ensure_finite("network output")?;
        Ok(Trace {
            inputs,
            caches,
            logits: logits.expect("spec has at least a softmax"),
            probs: cur,
            bn_stats,
        })
    }

    #[allow(clippy::type_complexity)]
    fn step(
        &self,
        i: usize,
        x: &Tensor<T>,
        mode: RunMode,
        rng: Option<&mut SplitMix64>,
    ) -> Result<(Tensor<T>, Cache<T>, Option<(Vec<T>, Vec<T>)>)> {
        let keep = mode == RunMode::Train;
        Ok(match &self.layers[i] {
            Layer::Dropout { rate } => {
                let dm = if keep { DropoutMode::Train } else { DropoutMode::Eval };
                let (y, mask) = dropout(x, *rate, dm, rng)?;
                (y, Cache::Mask(mask), None)
            }
            Layer::MultiConv { branches } => (multi_conv_forward(x, branches)?, Cache::None, None),
            Layer::Conv(c) => (crate::nn::conv1d_forward(x, c)?, Cache::None, None),
            Layer::BatchNorm(state) => {
                let bm = match mode {
                    RunMode::Train => BnMode::Train,
                    RunMode::Accumulate => BnMode::Accumulate,
                    RunMode::Eval => BnMode::AdaptEval,
                };
                let f = batchnorm_forward(x, state, bm)?;
                let stats = (bm != BnMode::AdaptEval).then_some((f.batch_mean, f.batch_var));
                let cache = match f.cache {
                    Some(c) if keep => Cache::Bn(c),
                    _ => Cache::None,
                };
                (f.output, cache, stats)
            }
            Layer::Activation(kind) => (activation_forward(x, *kind), Cache::None, None),
            Layer::MaxPool { width, stride } => (pool1d_forward(x, *width, *stride, PoolKind::Max)?, Cache::None, None),
            Layer::Concat => (x.clone(), Cache::None, None),
            Layer::Flatten => {
                let (b, l, c) = flat_dims(x);
                (x.clone().reshape(&[b, l * c])?, Cache::None, None)
            }
            Layer::Dense { layer, activation } => {
                let z = dense_forward(x, layer)?;
                if *activation == ActivationKind::None {
                    (z, Cache::None, None)
                } else {
                    let y = activation_forward(&z, *activation);
                    (y, if keep { Cache::Dense(z) } else { Cache::None }, None)
                }
            }
            Layer::Softmax => (softmax(x)?, Cache::None, None),
        })
    }

    /// Gradients of every parameter, in [`Network::params_mut`] order, given
    /// the loss gradient with respect to the logits of a train-mode trace.
    pub fn backward(&self, trace: &Trace<T>, logit_grad: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let n = self.layers.len();
        if trace.inputs.len() != n {
            return Err(Error::invalid("backward needs a train-mode trace"));
        }
        trace.logits.same_shape(logit_grad, "logit gradient")?;
        let mut per_layer: Vec<Vec<Vec<T>>> = vec![Vec::new(); n];
        let mut g = logit_grad.clone();
        for i in (0..n - 1).rev() {
            let x = &trace.inputs[i];
            let need_dx = i > 0;
            g = match (&self.layers[i], &trace.caches[i]) {
                (Layer::Dropout { .. }, Cache::Mask(mask)) => {
                    if !need_dx {
                        break;
                    }
                    dropout_backward(&g, mask.as_deref())?
                }
                (Layer::MultiConv { branches }, _) => {
                    let (dx, grads) = multi_conv_backward(x, branches, &g, need_dx)?;
                    per_layer[i] = grads;
                    dx
                }
                (Layer::Conv(c), _) => {
                    let (dx, grads) = multi_conv_backward(x, std::slice::from_ref(c), &g, need_dx)?;
                    per_layer[i] = grads;
                    dx
                }
                (Layer::BatchNorm(state), Cache::Bn(cache)) => {
                    let bg = batchnorm_backward(cache, state, &g)?;
                    per_layer[i] = vec![bg.scale, bg.offset];
                    bg.input
                }
                (Layer::Activation(kind), _) => activation_backward(x, *kind, &g)?,
                (Layer::MaxPool { width, stride }, _) => pool1d_backward(x, *width, *stride, PoolKind::Max, &g)?,
                (Layer::Concat, _) => g,
                (Layer::Flatten, _) => g.reshape(x.shape())?,
                (Layer::Dense { layer, activation }, cache) => {
                    let gz = match (activation, cache) {
                        (ActivationKind::None, _) => g,
                        (a, Cache::Dense(z)) => activation_backward(z, *a, &g)?,
                        _ => return Err(Error::invalid("dense cache missing")),
                    };
                    let dg = dense_backward(x, layer, &gz)?;
                    per_layer[i] = vec![dg.weights.into_data(), dg.bias.into_data()];
                    dg.input
                }
                _ => return Err(Error::invalid(format!("layer {i} has no gradient cache"))),
            };
            if !need_dx {
                break;
            }
        }
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Every trainable tensor, in a fixed order shared with
    /// [`Network::backward`]. Batch-norm accumulators are not trainable.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::MultiConv { branches } => {
                    for (b, c) in branches.iter_mut().enumerate() {
                        out.push(ParamMut {
                            name: format!("layer {i} branch {b} kernels"),
                            values: c.kernels.data_mut(),
                        });
                        out.push(ParamMut {
                            name: format!("layer {i} branch {b} bias"),
                            values: c.bias.data_mut(),
                        });
                    }
                }
                Layer::Conv(c) => {
                    out.push(ParamMut {
                        name: format!("layer {i} kernels"),
                        values: c.kernels.data_mut(),
                    });
                    out.push(ParamMut {
                        name: format!("layer {i} bias"),
                        values: c.bias.data_mut(),
                    });
                }
                Layer::BatchNorm(s) => {
                    out.push(ParamMut {
                        name: format!("layer {i} scale"),
                        values: &mut s.scale,
                    });
                    out.push(ParamMut {
                        name: format!("layer {i} offset"),
                        values: &mut s.offset,
                    });
                }
                Layer::Dense { layer, .. } => {
                    out.push(ParamMut {
                        name: format!("layer {i} weights"),
                        values: layer.weights.data_mut(),
                    });
                    out.push(ParamMut {
                        name: format!("layer {i} bias"),
                        values: layer.bias.data_mut(),
                    });
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        let conv = |c: &ConvLayerState<T>| c.kernels.data().len() + c.bias.data().len();
        self.layers
            .iter()
            .map(|l| match l {
                Layer::MultiConv { branches } => branches.iter().map(conv).sum(),
                Layer::Conv(c) => conv(c),
                Layer::BatchNorm(s) => s.scale.len() + s.offset.len(),
                Layer::Dense { layer, .. } => layer.weights.data().len() + layer.bias.data().len(),
                _ => 0,
            })
            .sum()
    }

    pub fn reset_statistics(&mut self) {
        for l in &mut self.layers {
            if let Layer::BatchNorm(s) = l {
                s.reset_statistics();
            }
        }
    }

    pub fn accumulate(&mut self, stats: &[BnStats<T>]) -> Result<()> {
        for s in stats {
            match self.layers.get_mut(s.layer) {
                Some(Layer::BatchNorm(state)) => state.accumulate(&s.mean, &s.var)?,
                _ => return Err(Error::invalid(format!("layer {} is not batch norm", s.layer))),
            }
        }
        Ok(())
    }

    /// Sets every convolution and dense bias to zero.
    pub fn zero_biases(&mut self) {
        for l in &mut self.layers {
            match l {
                Layer::MultiConv { branches } => branches.iter_mut().for_each(|c| c.bias.data_mut().fill(T::zero())),
                Layer::Conv(c) => c.bias.data_mut().fill(T::zero()),
                Layer::Dense { layer, .. } => layer.bias.data_mut().fill(T::zero()),
                _ => {}
            }
        }
    }

    /// Same network at another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        use crate::tensor::convert;
        let v = |x: &[T]| x.iter().map(|&a| U::of(a.f64())).collect::<Vec<U>>();
        let conv = |c: &ConvLayerState<T>| ConvLayerState {
            kernels: convert(&c.kernels),
            bias: convert(&c.bias),
            stride: c.stride,
            padding: c.padding,
        };
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                Layer::MultiConv { branches } => Layer::MultiConv {
                    branches: branches.iter().map(conv).collect(),
                },
                Layer::Conv(c) => Layer::Conv(conv(c)),
                Layer::BatchNorm(s) => Layer::BatchNorm(BatchNormState {
                    scale: v(&s.scale),
                    offset: v(&s.offset),
                    epsilon: s.epsilon,
                    accumulated_means: v(&s.accumulated_means),
                    accumulated_vars: v(&s.accumulated_vars),
                    batch_count: s.batch_count,
                }),
                Layer::Activation(a) => Layer::Activation(*a),
                Layer::MaxPool { width, stride } => Layer::MaxPool {
                    width: *width,
                    stride: *stride,
                },
                Layer::Concat => Layer::Concat,
                Layer::Flatten => Layer::Flatten,
                Layer::Dense { layer, activation } => Layer::Dense {
                    layer: DenseLayerState {
                        weights: convert(&layer.weights),
                        bias: convert(&layer.bias),
                    },
                    activation: *activation,
                },
                Layer::Softmax => Layer::Softmax,
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            layers,
        }
    }
}

fn flat_dims<T: Real>(x: &Tensor<T>) -> (usize, usize, usize) {
    match x.shape() {
        [b, f] => (*b, *f, 1),
        _ => x.blc(),
    }
}

fn multi_conv_forward<T: Real>(x: &Tensor<T>, branches: &[ConvLayerState<T>]) -> Result<Tensor<T>> {
    let (b, l, cin) = x.blc();
    let mut lo = 0;
    for c in branches {
        if c.in_channels() != cin {
            return Err(Error::shape(format!(
                "input has {cin} channels, kernels expect {}",
                c.in_channels()
            )));
        }
        lo = c.geometry(l)?.0;
    }
    x.ensure_finite("convolution input")?;
    let total: usize = branches.iter().map(|c| c.out_channels()).sum();
    let mut out = vec![T::zero(); b * lo * total];
    let packed: Vec<Vec<T>> = branches.iter().map(|c| c.packed()).collect();
    for s in 0..b {
        let xs = &x.data()[s * l * cin..(s + 1) * l * cin];
        let os = &mut out[s * lo * total..(s + 1) * lo * total];
        let mut off = 0;
        for (c, kt) in branches.iter().zip(&packed) {
            c.forward_sample(kt, xs, l, os, total, off);
            off += c.out_channels();
        }
    }
    Tensor::new(&[b, lo, total], out)
}

fn multi_conv_backward<T: Real>(
    x: &Tensor<T>,
    branches: &[ConvLayerState<T>],
    g: &Tensor<T>,
    need_dx: bool,
) -> Result<(Tensor<T>, Vec<Vec<T>>)> {
    let (b, l, cin) = x.blc();
    let (_, lo, total) = g.blc();
    let mut dx = vec![T::zero(); if need_dx { x.len() } else { 0 }];
    let mut grads = Vec::with_capacity(2 * branches.len());
    let mut off = 0;
    for c in branches {
        let mut dk = vec![T::zero(); c.kernels.len()];
        let mut db = vec![T::zero(); c.out_channels()];
        let kt = c.packed();
        for s in 0..b {
            let dxs = need_dx.then(|| &mut dx[s * l * cin..(s + 1) * l * cin]);
            c.backward_sample(
                &kt,
                &x.data()[s * l * cin..(s + 1) * l * cin],
                l,
                &g.data()[s * lo * total..(s + 1) * lo * total],
                total,
                off,
                dxs,
                &mut dk,
                &mut db,
            );
        }
        off += c.out_channels();
        grads.push(c.unpack(&dk));
        grads.push(db);
    }
    let dx = if need_dx { Tensor::new(x.shape(), dx)? } else { x.clone() };
    Ok((dx, grads))
}
