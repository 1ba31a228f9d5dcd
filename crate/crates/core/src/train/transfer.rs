//! Cross-condition transfer: train on one domain, evaluate on another with
//! adapted batch-norm statistics.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::arch::ModelKind;
use crate::error::{Error, Result};
use crate::signal::{ClassLabel, LabeledWindows, Partition, SegmentedDataset};

use super::evaluate::{evaluate, EvalMode};
use super::trainer::{train_model, TrainConfig};

/// A working condition: train and test partitions of one dataset.
#[derive(Clone, Debug)]
pub struct Domain {
    pub id: String,
    pub classes: Vec<ClassLabel>,
    pub train: LabeledWindows,
    pub test: LabeledWindows,
}

impl Domain {
    pub fn from_dataset(id: impl Into<String>, ds: &SegmentedDataset) -> Self {
        Domain {
            id: id.into(),
            classes: ds.classes(),
            train: ds.partition(Partition::Train),
            test: ds.partition(Partition::Test),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferTask {
    pub source: String,
    pub target: String,
}

impl TransferTask {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        TransferTask {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn name(&self) -> String {
        format!("{}->{}", self.source, self.target)
    }
}

/// `X:Y` or `X->Y`.
impl FromStr for TransferTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("->")
            .or_else(|| s.split_once(':'))
            .ok_or_else(|| Error::invalid(format!("task {s:?} is not of the form SOURCE:TARGET")))?;
        if a.is_empty() || b.is_empty() {
            return Err(Error::invalid(format!("task {s:?} has an empty endpoint")));
        }
        Ok(TransferTask::new(a, b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferRecord {
    pub task: String,
    pub model: String,
    pub repeat: usize,
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub task: String,
    pub model: String,
    pub repeats: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std: f64,
}

fn names(classes: &[ClassLabel]) -> String {
    classes.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
}

fn find<'a>(domains: &'a [Domain], id: &str) -> Result<&'a Domain> {
    domains
        .iter()
        .find(|d| d.id == id)
        .ok_or_else(|| Error::Dataset(format!("no dataset loaded for domain {id:?}")))
}

/// Checks every task before any training starts.
pub fn check_tasks(tasks: &[TransferTask], domains: &[Domain]) -> Result<()> {
    for t in tasks {
        let (s, d) = (find(domains, &t.source)?, find(domains, &t.target)?);
        if s.classes != d.classes {
            return Err(Error::Dataset(format!(
                "class mismatch in {}: source has {{{}}}, target has {{{}}}",
                t.name(),
                names(&s.classes),
                names(&d.classes)
            )));
        }
        if s.train.window != d.test.window {
            return Err(Error::Dataset(format!(
                "window mismatch in {}: {} vs {}",
                t.name(),
                s.train.window,
                d.test.window
            )));
        }
        if s.train.is_empty() || d.test.is_empty() {
            return Err(Error::Dataset(format!("{}: empty train or test partition", t.name())));
        }
    }
    Ok(())
}

/// One record per (task, model, repeat). Repeat `r` trains with seed
/// `cfg.seed + r`, shared by all models.
pub fn run_transfer(
    tasks: &[TransferTask],
    domains: &[Domain],
    models: &[ModelKind],
    repeats: usize,
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&TransferRecord),
) -> Result<Vec<TransferRecord>> {
    if repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    check_tasks(tasks, domains)?;
    let mut out = Vec::new();
    for task in tasks {
        let (src, dst) = (find(domains, &task.source)?, find(domains, &task.target)?);
        let num_classes = src.classes.iter().map(|c| c.code()).max().unwrap_or(0) + 1;
        for &model in models {
            let spec = model.build(src.train.window, num_classes.max(2))?;
            for repeat in 0..repeats {
                let started = Instant::now();
                let run_cfg = TrainConfig {
                    seed: cfg.seed.wrapping_add(repeat as u64),
                    ..cfg.clone()
                };
                let (net, _) = train_model(&spec, &src.train, &run_cfg, |_| {})?;
                let (accuracy, _) = evaluate(&net, &dst.test, EvalMode::Adbn)?;
                let rec = TransferRecord {
                    task: task.name(),
                    model: model.name().to_owned(),
                    repeat,
                    accuracy,
                    seconds: started.elapsed().as_secs_f64(),
                };
                on_record(&rec);
                out.push(rec);
            }
        }
    }
    Ok(out)
}

/// Mean and spread per (task, model) in first-appearance order.
pub fn summarize(records: &[TransferRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.task.clone(), r.model.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(task, model)| {
            let acc: Vec<f64> = records
                .iter()
                .filter(|r| r.task == task && r.model == model)
                .map(|r| r.accuracy)
                .collect();
            let n = acc.len();
            let mean = acc.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            CellSummary {
                task,
                model,
                repeats: n,
                mean,
                std,
            }
        })
        .collect()
}

pub fn results_csv(records: &[TransferRecord]) -> String {
    let mut s = String::from("task,model,repeat,accuracy,seconds\n");
    for r in records {
        writeln!(s, "{},{},{},{:.6},{:.3}", r.task, r.model, r.repeat, r.accuracy, r.seconds).expect("string write");
    }
    s
}

pub fn summary_csv(cells: &[CellSummary]) -> String {
    let mut s = String::from("task,model,repeats,mean_accuracy,std_accuracy\n");
    for c in cells {
        writeln!(s, "{},{},{},{:.6},{:.6}", c.task, c.model, c.repeats, c.mean, c.std).expect("string write");
    }
    s
}
