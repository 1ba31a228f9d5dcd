//! Declarative architecture descriptors and the three reference builders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::conv_geometry;
use crate::nn::dropout::DEFAULT_RATE;
use crate::nn::pool::pool_output_len;
use crate::nn::{ActivationKind, Padding};

fn same() -> Padding {
    Padding::Same
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dropout {
        rate: f64,
    },
    /// Parallel single-input convolutions, one branch per width, outputs
    /// stacked along channels in width order.
    MultiConv {
        widths: Vec<usize>,
        stride: usize,
        kernels_per_width: usize,
        #[serde(default = "same")]
        padding: Padding,
    },
    Conv {
        width: usize,
        stride: usize,
        channels: usize,
        #[serde(default = "same")]
        padding: Padding,
    },
    Batchnorm,
    Activation {
        function: ActivationKind,
    },
    Maxpool {
        width: usize,
        stride: usize,
    },
    /// Ends a multi-branch section. Branch outputs are already stacked, so
    /// this is an identity on data and only closes the section.
    Concat,
    Flatten,
    Dense {
        units: usize,
        activation: ActivationKind,
    },
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Shape {
    /// `[length, channels]` per sample.
    Seq { length: usize, channels: usize },
    Flat { features: usize },
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Seq { length, channels } => length * channels,
            Shape::Flat { features } => features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub name: String,
    pub input_length: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    pub fn input_shape(&self) -> Shape {
        Shape::Seq {
            length: self.input_length,
            channels: 1,
        }
    }

    /// Output shape of every layer in order. Rejects any inconsistency in the
    /// chain or a softmax anywhere but last.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let err = |i: usize, msg: String| Error::Model(format!("layer {i} ({}): {msg}", self.layer_name(i)));
        if self.input_length == 0 || self.num_classes < 2 {
            return Err(Error::Model("input length must be positive and num_classes >= 2".into()));
        }
        let mut shape = self.input_shape();
        let mut open_branches = false;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let seq = |shape: Shape| match shape {
                Shape::Seq { length, channels } => Ok((length, channels)),
                Shape::Flat { .. } => Err(err(i, "needs a sequence input".into())),
            };
            shape = match layer {
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(err(i, format!("rate {rate} outside [0, 1)")));
                    }
                    shape
                }
                LayerSpec::MultiConv {
                    widths,
                    stride,
                    kernels_per_width,
                    padding,
                } => {
                    let (length, channels) = seq(shape)?;
                    if open_branches {
                        return Err(err(i, "nested multi-branch section".into()));
                    }
                    if widths.is_empty() || *kernels_per_width == 0 || *stride == 0 || widths.contains(&0) {
                        return Err(err(i, "widths, stride and kernel count must be positive".into()));
                    }
                    let mut lo = None;
                    for &w in widths {
                        let (l, _) = conv_geometry(length, w, *stride, *padding).map_err(|e| err(i, e.to_string()))?;
                        if lo.is_some_and(|p| p != l) {
                            return Err(err(i, "branches produce different lengths".into()));
                        }
                        lo = Some(l);
                    }
                    let _ = channels;
                    open_branches = true;
                    Shape::Seq {
                        length: lo.expect("non-empty widths"),
                        channels: widths.len() * kernels_per_width,
                    }
                }
                LayerSpec::Conv {
                    width,
                    stride,
                    channels,
                    padding,
                } => {
                    let (length, _) = seq(shape)?;
                    if open_branches {
                        return Err(err(i, "branches must be concatenated first".into()));
                    }
                    if *width == 0 || *stride == 0 || *channels == 0 {
                        return Err(err(i, "width, stride and channels must be positive".into()));
                    }
                    let (l, _) = conv_geometry(length, *width, *stride, *padding).map_err(|e| err(i, e.to_string()))?;
                    Shape::Seq {
                        length: l,
                        channels: *channels,
                    }
                }
                LayerSpec::Batchnorm | LayerSpec::Activation { .. } => shape,
                LayerSpec::Maxpool { width, stride } => {
                    let (length, channels) = seq(shape)?;
                    let l = pool_output_len(length, *width, *stride).map_err(|e| err(i, e.to_string()))?;
                    Shape::Seq { length: l, channels }
                }
                LayerSpec::Concat => {
                    if !open_branches {
                        return Err(err(i, "no multi-branch section to concatenate".into()));
                    }
                    open_branches = false;
                    shape
                }
                LayerSpec::Flatten => {
                    if open_branches {
                        return Err(err(i, "branches must be concatenated first".into()));
                    }
                    Shape::Flat { features: shape.size() }
                }
                LayerSpec::Dense { units, .. } => {
                    if !matches!(shape, Shape::Flat { .. }) {
                        return Err(err(i, "needs a flattened input".into()));
                    }
                    if *units == 0 {
                        return Err(err(i, "units must be positive".into()));
                    }
                    Shape::Flat { features: *units }
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(err(i, "softmax must be the last layer".into()));
                    }
                    match shape {
                        Shape::Flat { features } if features == self.num_classes => shape,
                        _ => return Err(err(i, format!("input must be {} logits, got {shape:?}", self.num_classes))),
                    }
                }
            };
            out.push(shape);
        }
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            return Err(Error::Model("the last layer must be softmax".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn layer_name(&self, i: usize) -> String {
        match self.layers.get(i) {
            Some(l) => serde_json::to_value(l)
                .ok()
                .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
                .unwrap_or_default(),
            None => String::new(),
        }
    }
}

pub const MSKACNN_WIDTHS: [usize; 4] = [32, 64, 128, 256];
pub const FIRST_STRIDE: usize = 16;
pub const BLOCK_CHANNELS: [usize; 5] = [32, 32, 64, 64, 64];
pub const HIDDEN_UNITS: usize = 64;

fn check_length(length: usize) -> Result<()> {
    if length == 0 || length % FIRST_STRIDE != 0 {
        return Err(Error::Model(format!(
            "input length {length} is not a positive multiple of the first-layer stride {FIRST_STRIDE}"
        )));
    }
    Ok(())
}

fn pool() -> LayerSpec {
    LayerSpec::Maxpool { width: 2, stride: 2 }
}

fn relu() -> LayerSpec {
    LayerSpec::Activation {
        function: ActivationKind::Relu,
    }
}

/// Shared tail: five 3x1 convolution blocks, flatten, dense, logits.
fn cnn_tail(num_classes: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for &channels in &BLOCK_CHANNELS {
        layers.extend([
            LayerSpec::Conv {
                width: 3,
                stride: 1,
                channels,
                padding: Padding::Same,
            },
            LayerSpec::Batchnorm,
            relu(),
            pool(),
        ]);
    }
    layers.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense {
            units: HIDDEN_UNITS,
            activation: ActivationKind::Relu,
        },
        LayerSpec::Dense {
            units: num_classes,
            activation: ActivationKind::None,
        },
        LayerSpec::Softmax,
    ]);
    layers
}

fn finish(spec: ArchitectureSpec) -> Result<ArchitectureSpec> {
    spec.validate()?;
    Ok(spec)
}

pub fn build_mskacnn(input_length: usize, num_classes: usize) -> Result<ArchitectureSpec> {
    check_length(input_length)?;
    let mut layers = vec![
        LayerSpec::Dropout { rate: DEFAULT_RATE },
        LayerSpec::MultiConv {
            widths: MSKACNN_WIDTHS.to_vec(),
            stride: FIRST_STRIDE,
            kernels_per_width: 4,
            padding: Padding::Same,
        },
        LayerSpec::Batchnorm,
        relu(),
        pool(),
        LayerSpec::Concat,
    ];
    layers.extend(cnn_tail(num_classes));
    finish(ArchitectureSpec {
        name: "mskacnn".into(),
        input_length,
        num_classes,
        layers,
    })
}

pub fn build_wdcnn(input_length: usize, num_classes: usize) -> Result<ArchitectureSpec> {
    check_length(input_length)?;
    let mut layers = vec![
        LayerSpec::Dropout { rate: DEFAULT_RATE },
        LayerSpec::Conv {
            width: 64,
            stride: FIRST_STRIDE,
            channels: 16,
            padding: Padding::Same,
        },
        LayerSpec::Batchnorm,
        relu(),
        pool(),
    ];
    layers.extend(cnn_tail(num_classes));
    finish(ArchitectureSpec {
        name: "wdcnn".into(),
        input_length,
        num_classes,
        layers,
    })
}

pub fn build_dnn(input_length: usize, num_classes: usize) -> Result<ArchitectureSpec> {
    check_length(input_length)?;
    finish(ArchitectureSpec {
        name: "dnn".into(),
        input_length,
        num_classes,
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 300,
                activation: ActivationKind::Relu,
            },
            LayerSpec::Dense {
                units: 100,
                activation: ActivationKind::Relu,
            },
            LayerSpec::Dense {
                units: num_classes,
                activation: ActivationKind::None,
            },
            LayerSpec::Softmax,
        ],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mskacnn,
    Wdcnn,
    Dnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mskacnn, ModelKind::Wdcnn, ModelKind::Dnn];

    pub fn build(self, input_length: usize, num_classes: usize) -> Result<ArchitectureSpec> {
        match self {
            ModelKind::Mskacnn => build_mskacnn(input_length, num_classes),
            ModelKind::Wdcnn => build_wdcnn(input_length, num_classes),
            ModelKind::Dnn => build_dnn(input_length, num_classes),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mskacnn => "MSKACNN",
            ModelKind::Wdcnn => "WDCNN",
            ModelKind::Dnn => "DNN",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mskacnn_canonical_lengths() {
        let spec = build_mskacnn(4096, 5).unwrap();
        let shapes = spec.shapes().unwrap();
        let concat = spec.layers.iter().position(|l| *l == LayerSpec::Concat).unwrap();
        assert_eq!(shapes[1], Shape::Seq { length: 256, channels: 16 });
        assert_eq!(shapes[concat], Shape::Seq { length: 128, channels: 16 });
        let pooled: Vec<usize> = spec
            .layers
            .iter()
            .zip(&shapes)
            .filter(|(l, _)| matches!(l, LayerSpec::Maxpool { .. }))
            .map(|(_, s)| match s {
                Shape::Seq { length, .. } => *length,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(pooled, vec![128, 64, 32, 16, 8, 4]);
        let flat = spec.layers.iter().position(|l| *l == LayerSpec::Flatten).unwrap();
        assert_eq!(shapes[flat], Shape::Flat { features: 256 });
        assert_eq!(*shapes.last().unwrap(), Shape::Flat { features: 5 });
    }

    #[test]
    fn wdcnn_shares_tail() {
        let m = build_mskacnn(4096, 4).unwrap();
        let w = build_wdcnn(4096, 4).unwrap();
        let mc = m.layers.iter().position(|l| *l == LayerSpec::Concat).unwrap();
        assert_eq!(m.layers[mc + 1..], w.layers[5..]);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(build_mskacnn(4100, 5).is_err());
        assert!(build_wdcnn(4100, 5).is_err());
        assert!(build_dnn(4100, 5).is_err());
        // too short for six pooling stages
        assert!(build_mskacnn(512, 5).is_err());
    }

    #[test]
    fn chain_errors() {
        let mut spec = build_dnn(64, 3).unwrap();
        spec.layers.swap(3, 4);
        assert!(spec.validate().is_err());
        let mut spec = build_mskacnn(4096, 5).unwrap();
        spec.layers.retain(|l| *l != LayerSpec::Concat);
        assert!(spec.validate().unwrap_err().to_string().contains("concatenated"));
        let mut spec = build_dnn(64, 3).unwrap();
        spec.num_classes = 4;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = build_mskacnn(4096, 5).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#"{"kind":"multi_conv","widths":[32,64,128,256],"stride":16,"kernels_per_width":4,"padding":"same"}"#));
        let back: ArchitectureSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"name":"x","input_length":16,"num_classes":2,"layers":[{"kind":"lstm"}]}"#;
        assert!(serde_json::from_str::<ArchitectureSpec>(bad).is_err());
    }
}
