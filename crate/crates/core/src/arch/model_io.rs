//! Single-file model format.
//!
//! * 8 bytes: `MSKAMDL` followed by the format version byte.
//! * `u32` LE length, then a UTF-8 JSON descriptor holding the architecture
//!   and the per-layer batch-norm epsilon and batch count.
//! * One blob per parameter tensor in layer order: a `u32` LE element count
//!   followed by that many LE `f32` values. Batch-norm layers store scale,
//!   offset, accumulated means and accumulated variances.
//!
//! Blob sizes are fully determined by the architecture; any disagreement is
//! reported against the layer that owns the blob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::{Layer, Network};
use super::spec::ArchitectureSpec;

pub const MAGIC: &[u8; 7] = b"MSKAMDL";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct BnMeta {
    layer: usize,
    epsilon: f64,
    batch_count: usize,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    architecture: ArchitectureSpec,
    batch_norm: Vec<BnMeta>,
}

fn blobs_mut(net: &mut Network<f32>) -> Vec<(usize, &'static str, &mut [f32])> {
    let mut out: Vec<(usize, &'static str, &mut [f32])> = Vec::new();
    for (i, layer) in net.layers.iter_mut().enumerate() {
        match layer {
            Layer::MultiConv { branches } => {
                for c in branches {
                    out.push((i, "kernels", c.kernels.data_mut()));
                    out.push((i, "bias", c.bias.data_mut()));
                }
            }
            Layer::Conv(c) => {
                out.push((i, "kernels", c.kernels.data_mut()));
                out.push((i, "bias", c.bias.data_mut()));
            }
            Layer::BatchNorm(s) => {
                out.push((i, "scale", s.scale.as_mut_slice()));
                out.push((i, "offset", s.offset.as_mut_slice()));
                out.push((i, "accumulated means", s.accumulated_means.as_mut_slice()));
                out.push((i, "accumulated variances", s.accumulated_vars.as_mut_slice()));
            }
            Layer::Dense { layer, .. } => {
                out.push((i, "weights", layer.weights.data_mut()));
                out.push((i, "bias", layer.bias.data_mut()));
            }
            _ => {}
        }
    }
    out
}

pub fn model_to_bytes(net: &Network<f32>) -> Result<Vec<u8>> {
    let batch_norm = net
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Layer::BatchNorm(s) => Some(BnMeta {
                layer: i,
                epsilon: s.epsilon,
                batch_count: s.batch_count,
            }),
            _ => None,
        })
        .collect();
    let desc = serde_json::to_vec(&Descriptor {
        architecture: net.spec.clone(),
        batch_norm,
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(&desc);
    let mut copy = net.clone();
    for (_, _, blob) in blobs_mut(&mut copy) {
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        for v in blob.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Network<f32>> {
    if bytes.len() < 8 || &bytes[..7] != MAGIC {
        return Err(Error::Model("not a model file".into()));
    }
    if bytes[7] != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model format version {} (expected {FORMAT_VERSION})",
            bytes[7]
        )));
    }
    let mut r = Reader { bytes, pos: 8 };
    let n = r.u32().ok_or_else(|| Error::Model("truncated descriptor length".into()))? as usize;
    let desc = r.take(n).ok_or_else(|| Error::Model("truncated descriptor".into()))?;
    let desc: Descriptor =
        serde_json::from_slice(desc).map_err(|e| Error::Model(format!("invalid descriptor: {e}")))?;
    let spec = &desc.architecture;
    let mut net = Network::<f32>::init(spec, 0)?;
    for meta in &desc.batch_norm {
        match net.layers.get_mut(meta.layer) {
            Some(Layer::BatchNorm(s)) => {
                if !(meta.epsilon >= 0.0 && meta.epsilon.is_finite()) {
                    return Err(Error::Model(format!("layer {}: invalid epsilon {}", meta.layer, meta.epsilon)));
                }
                s.epsilon = meta.epsilon;
                s.batch_count = meta.batch_count;
            }
            _ => return Err(Error::Model(format!("layer {} is not batch norm", meta.layer))),
        }
    }
    let names: Vec<String> = (0..spec.layers.len()).map(|i| spec.layer_name(i)).collect();
    for (layer, what, blob) in blobs_mut(&mut net) {
        let at = || format!("layer {layer} ({}) {what}", names[layer]);
        let count = r
            .u32()
            .ok_or_else(|| Error::Model(format!("{}: blob missing", at())))? as usize;
        if count != blob.len() {
            return Err(Error::Model(format!(
                "{}: blob holds {count} values, architecture requires {}",
                at(),
                blob.len()
            )));
        }
        let data = r
            .take(count * 4)
            .ok_or_else(|| Error::Model(format!("{}: blob truncated", at())))?;
        for (v, b) in blob.iter_mut().zip(data.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("four bytes"));
        }
        if blob.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("{}: non-finite value", at())));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Model(format!("{} trailing bytes after the last blob", bytes.len() - r.pos)));
    }
    Ok(net)
}

pub fn save_model(net: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(net)?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    model_from_bytes(&bytes)
}
