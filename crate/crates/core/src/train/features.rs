//! Per-layer activation export for external embedding tools.

use std::fmt::Write as _;

use crate::arch::{Layer, Network};
use crate::error::{Error, Result};
use crate::signal::{ClassLabel, LabeledWindows};
use crate::tensor::Real;

use super::evaluate::{adapt, EvalMode, EVAL_BATCH};
use super::trainer::{check_data, gather};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub columns: usize,
    /// Row-major, `labels.len() * columns`.
    pub values: Vec<f32>,
    pub labels: Vec<usize>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.columns..(i + 1) * self.columns]
    }

    /// Header `label,f0,f1,...`; labels written as class names.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("label");
        for j in 0..self.columns {
            write!(s, ",f{j}").expect("string write");
        }
        s.push('\n');
        for (i, &y) in self.labels.iter().enumerate() {
            match ClassLabel::from_code(y) {
                Ok(c) => s.push_str(c.name()),
                Err(_) => write!(s, "{y}").expect("string write"),
            }
            for v in self.row(i) {
                write!(s, ",{v}").expect("string write");
            }
            s.push('\n');
        }
        s
    }
}

/// Indices of layers whose outputs can be exported.
pub fn feature_layers<T: Real>(net: &Network<T>) -> Vec<usize> {
    net.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Layer::MaxPool { .. } | Layer::Dense { .. }))
        .map(|(i, _)| i)
        .collect()
}

/// Flattened output of layer `layer_index` for every window.
pub fn extract_features<T: Real>(
    net: &Network<T>,
    data: &LabeledWindows,
    layer_index: usize,
    mode: EvalMode,
) -> Result<FeatureMatrix> {
    check_data(&net.spec, data)?;
    let valid = feature_layers(net);
    if !valid.contains(&layer_index) {
        return Err(Error::invalid(format!(
            "layer {layer_index} is not a pooling or dense layer; choose one of {valid:?}"
        )));
    }
    let adapted;
    let net = match mode {
        EvalMode::Adbn => {
            adapted = adapt(net, data)?;
            &adapted
        }
        EvalMode::Frozen => net,
    };
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut values = Vec::new();
    let mut columns = 0;
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = gather::<T>(data, chunk)?;
        let y = net.forward_to(&x, layer_index)?;
        columns = y.len() / chunk.len();
        values.extend(y.data().iter().map(|v| v.f64() as f32));
    }
    Ok(FeatureMatrix {
        columns,
        values,
        labels: data.labels.clone(),
    })
}
