//! Classification with frozen or test-adapted batch-norm statistics.

use serde::{Deserialize, Serialize};

use crate::arch::{Network, RunMode};
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::signal::LabeledWindows;
use crate::tensor::Real;

use super::trainer::{check_data, gather};

/// Batch size of both evaluation passes.
pub const EVAL_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Re-estimate batch-norm statistics on the evaluated windows.
    Adbn,
    /// Use the statistics stored at the end of training.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Copy of `net` whose batch-norm statistics are the per-batch averages
/// over `data` (batches of [`EVAL_BATCH`] in data order, remainder
/// included with equal weight).
pub fn adapt<T: Real>(net: &Network<T>, data: &LabeledWindows) -> Result<Network<T>> {
    check_data(&net.spec, data)?;
    let mut adapted = net.clone();
    adapted.reset_statistics();
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = gather::<T>(data, chunk)?;
        let t = net.forward(&x, RunMode::Accumulate, None)?;
        adapted.accumulate(&t.bn_stats)?;
    }
    Ok(adapted)
}

/// Posterior rows, one per window, in data order.
pub fn predict<T: Real>(net: &Network<T>, data: &LabeledWindows, mode: EvalMode) -> Result<Vec<Vec<f64>>> {
    check_data(&net.spec, data)?;
    let adapted;
    let net = match mode {
        EvalMode::Adbn => {
            adapted = adapt(net, data)?;
            &adapted
        }
        EvalMode::Frozen => net,
    };
    let k = net.num_classes();
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = gather::<T>(data, chunk)?;
        let t = net.forward(&x, RunMode::Eval, None)?;
        out.extend(t.probs.data().chunks_exact(k).map(|r| r.iter().map(|v| v.f64()).collect()));
    }
    Ok(out)
}

pub fn evaluate<T: Real>(net: &Network<T>, data: &LabeledWindows, mode: EvalMode) -> Result<(f64, ConfusionMatrix)> {
    if data.is_empty() {
        return Err(Error::Dataset("evaluation set is empty".into()));
    }
    let posteriors = predict(net, data, mode)?;
    let mut cm = ConfusionMatrix::new(net.num_classes());
    for (p, &y) in posteriors.iter().zip(&data.labels) {
        cm.record(y, argmax(p));
    }
    Ok((cm.accuracy(), cm))
}
