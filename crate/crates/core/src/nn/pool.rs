use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Mean,
}

pub fn pool_output_len(len: usize, width: usize, stride: usize) -> Result<usize> {
    if width == 0 || stride == 0 {
        return Err(Error::invalid("pool width and stride must be >= 1"));
    }
    if width > len {
        return Err(Error::shape(format!("pool width {width} exceeds input length {len}")));
    }
    Ok((len - width) / stride + 1)
}

fn out_shape(rank: usize, b: usize, lo: usize, c: usize) -> Vec<usize> {
    match rank {
        1 => vec![lo],
        2 => vec![lo, c],
        _ => vec![b, lo, c],
    }
}

/// First index of the window maximum, per channel.
#[inline]
fn argmax_in_window<T: Real>(x: &[T], start: usize, width: usize, c: usize, ch: usize) -> usize {
    let mut best = start;
    let mut best_v = x[start * c + ch];
    for t in start + 1..start + width {
        let v = x[t * c + ch];
        if v > best_v {
            best_v = v;
            best = t;
        }
    }
    best
}

pub fn pool1d_forward<T: Real>(input: &Tensor<T>, width: usize, stride: usize, kind: PoolKind) -> Result<Tensor<T>> {
    let (b, l, c) = input.blc();
    let lo = pool_output_len(l, width, stride)?;
    let inv_w = T::one() / T::of_usize(width);
    let mut out = Vec::with_capacity(b * lo * c);
    for s in 0..b {
        let x = &input.data()[s * l * c..(s + 1) * l * c];
        for o in 0..lo {
            let start = o * stride;
            for ch in 0..c {
                let v = match kind {
                    PoolKind::Max => x[argmax_in_window(x, start, width, c, ch) * c + ch],
                    PoolKind::Mean => {
                        let mut acc = T::zero();
                        for t in start..start + width {
                            acc = acc + x[t * c + ch];
                        }
                        acc * inv_w
                    }
                };
                out.push(v);
            }
        }
    }
    Tensor::new(&out_shape(input.rank(), b, lo, c), out)
}

/// Max routes each window's gradient to its first maximal element; mean
/// spreads it uniformly. Overlapping windows accumulate.
pub fn pool1d_backward<T: Real>(
    input: &Tensor<T>,
    width: usize,
    stride: usize,
    kind: PoolKind,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, l, c) = input.blc();
    let lo = pool_output_len(l, width, stride)?;
    let expected = out_shape(input.rank(), b, lo, c);
    if upstream.shape() != expected.as_slice() {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match pool output {expected:?}",
            upstream.shape()
        )));
    }
    let inv_w = T::one() / T::of_usize(width);
    let mut dx = vec![T::zero(); input.len()];
    for s in 0..b {
        let x = &input.data()[s * l * c..(s + 1) * l * c];
        let g = &upstream.data()[s * lo * c..(s + 1) * lo * c];
        let d = &mut dx[s * l * c..(s + 1) * l * c];
        for o in 0..lo {
            let start = o * stride;
            for ch in 0..c {
                let gv = g[o * c + ch];
                match kind {
                    PoolKind::Max => {
                        let t = argmax_in_window(x, start, width, c, ch);
                        d[t * c + ch] = d[t * c + ch] + gv;
                    }
                    PoolKind::Mean => {
                        for t in start..start + width {
                            d[t * c + ch] = d[t * c + ch] + gv * inv_w;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input.shape(), dx)
}
