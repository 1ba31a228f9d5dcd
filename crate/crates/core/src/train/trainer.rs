//! Mini-batch Adam training with early stopping on the training loss.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arch::{ArchitectureSpec, Layer, Network, RunMode};
use crate::error::{Error, Result};
use crate::nn::{adam_step, argmax, softmax_cross_entropy, AdamConfig, OptimizerState};
use crate::rng::SplitMix64;
use crate::signal::LabeledWindows;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 2000,
            patience: 5,
            min_delta: 1e-4,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::invalid("batch size, epoch cap and patience must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::invalid(format!(
                "patience {} exceeds the epoch cap {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.min_delta >= 0.0 && self.min_delta.is_finite()) {
            return Err(Error::invalid("min_delta must be >= 0"));
        }
        self.adam().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    EpochCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stop_reason: StopReason,
    pub final_epoch: usize,
    pub seconds: f64,
}

/// Stops once the best loss has not improved by more than `min_delta` for
/// `patience` consecutive epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    min_delta: f64,
    best: f64,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopper {
            patience,
            min_delta,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records one epoch's loss; true means stop now.
    pub fn update(&mut self, loss: f64) -> bool {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

/// Stop epoch (1-based) that [`EarlyStopper`] yields on `losses`, or `None`
/// if the sequence runs out first.
pub fn early_stop_epoch(losses: &[f64], patience: usize, min_delta: f64) -> Option<usize> {
    let mut s = EarlyStopper::new(patience, min_delta);
    losses.iter().position(|&l| s.update(l)).map(|i| i + 1)
}

pub(crate) fn check_data(spec: &ArchitectureSpec, data: &LabeledWindows) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    if data.window != spec.input_length {
        return Err(Error::Dataset(format!(
            "window length {} does not match the model input length {}",
            data.window, spec.input_length
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= spec.num_classes) {
        return Err(Error::Dataset(format!(
            "label {bad} out of range for a {}-class model",
            spec.num_classes
        )));
    }
    Ok(())
}

pub(crate) fn gather<T: Real>(data: &LabeledWindows, idx: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
    let l = data.window;
    let mut x = Vec::with_capacity(idx.len() * l);
    for &i in idx {
        x.extend(data.window(i).iter().map(|&v| T::of(v as f64)));
    }
    Ok((Tensor::new(&[idx.len(), l, 1], x)?, idx.iter().map(|&i| data.labels[i]).collect()))
}

/// Trains a fresh network. Once the weights are final, the batch-norm
/// statistics are re-accumulated over the training set in inference mode
/// (dropout off, batches of 64 in data order). Statistics gathered during
/// training epochs are skewed by input dropout and by weight drift, and even small
/// per-layer skews compound across six normalisation layers.
pub fn train<T: Real>(
    spec: &ArchitectureSpec,
    data: &LabeledWindows,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<(Network<T>, TrainReport)> {
    cfg.validate()?;
    check_data(spec, data)?;
    let started = Instant::now();
    let mut net = Network::<T>::init(spec, cfg.seed)?;
    let has_bn = net.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)));
    if has_bn && data.len() < 2 {
        return Err(Error::Dataset("batch-norm training needs at least 2 windows".into()));
    }
    let mut opt = OptimizerState::<T>::new(cfg.adam())?;
    let mut shuffle_rng = SplitMix64::derive(cfg.seed, 1);
    let mut dropout_rng = SplitMix64::derive(cfg.seed, 2);
    let mut stopper = EarlyStopper::new(cfg.patience, cfg.min_delta);
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::EpochCap;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        net.reset_statistics();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            if has_bn && idx.len() < 2 {
                continue;
            }
            let fail = |message: String| Error::Training {
                epoch,
                batch: bi,
                message,
            };
            let (x, y) = gather::<T>(data, idx)?;
            let trace = net.forward(&x, RunMode::Train, Some(&mut dropout_rng)).map_err(|e| fail(e.to_string()))?;
            let ce = softmax_cross_entropy(&trace.logits, &y)?;
            if !ce.loss.is_finite() {
                return Err(fail(format!("loss is {}", ce.loss)));
            }
            let grads = net.backward(&trace, &ce.logit_grad)?;
            net.accumulate(&trace.bn_stats)?;
            adam_step(&mut net.params_mut(), &grads, &mut opt).map_err(|e| fail(e.to_string()))?;
            loss_sum += ce.loss * idx.len() as f64;
            seen += idx.len();
            correct += ce
                .probs
                .data()
                .chunks_exact(spec.num_classes)
                .zip(&y)
                .filter(|(p, &t)| argmax(p) == t)
                .count();
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / seen as f64,
            accuracy: correct as f64 / seen as f64,
        };
        progress(&stats);
        let stop = stopper.update(stats.loss);
        epochs.push(stats);
        if stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    let final_epoch = epochs.len();
    if has_bn {
        net = super::evaluate::adapt(&net, data)?;
    }
    Ok((
        net,
        TrainReport {
            epochs,
            stop_reason,
            final_epoch,
            seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Trains at the configured precision and returns storage-precision
/// parameters.
pub fn train_model(
    spec: &ArchitectureSpec,
    data: &LabeledWindows,
    cfg: &TrainConfig,
    progress: impl FnMut(&EpochStats),
) -> Result<(Network<f32>, TrainReport)> {
    match cfg.precision {
        Precision::F32 => train::<f32>(spec, data, cfg, progress),
        Precision::F64 => train::<f64>(spec, data, cfg, progress).map(|(n, r)| (n.cast(), r)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build_dnn;

    #[test]
    fn stopper_rule() {
        assert_eq!(early_stop_epoch(&[1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4], 5, 1e-4), None);
        assert_eq!(early_stop_epoch(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 5, 1e-4), Some(6));
        // improvements smaller than min_delta do not count
        assert_eq!(early_stop_epoch(&[1.0, 0.99995, 0.99993, 0.99992, 0.99991, 0.99991], 5, 1e-4), Some(6));
        assert_eq!(early_stop_epoch(&[3.0, 2.0, 2.5, 2.5, 1.0], 2, 0.0), Some(4));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patience: 10,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_mismatched_window() {
        let spec = build_dnn(32, 2).unwrap();
        let data = LabeledWindows {
            window: 16,
            data: vec![0.0; 32],
            labels: vec![0, 1],
        };
        assert!(train::<f64>(&spec, &data, &TrainConfig::default(), |_| {}).is_err());
    }
}
