//! Strided 1D cross-correlation over `[batch, length, channels]` tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::vecops::{axpy, dot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    /// Output length `ceil(L / S)`; zeros split evenly with the odd one on the right.
    Same,
}

/// Kernels are stored `[width, in_channels, out_channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerState<T> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Output length and left padding for an input of length `len`.
pub fn conv_geometry(len: usize, width: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if width == 0 || stride == 0 {
        return Err(Error::invalid("kernel width and stride must be >= 1"));
    }
    match padding {
        Padding::Valid => {
            if len < width {
                return Err(Error::shape(format!(
                    "valid convolution needs input length >= kernel width ({len} < {width})"
                )));
            }
            Ok(((len - width) / stride + 1, 0))
        }
        Padding::Same => {
            let out = len.div_ceil(stride);
            let total = ((out - 1) * stride + width).saturating_sub(len);
            Ok((out, total / 2))
        }
    }
}

impl<T: Real> ConvLayerState<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, stride: usize, padding: Padding) -> Result<Self> {
        if kernels.rank() != 3 {
            return Err(Error::shape(format!(
                "kernels must be [width, in, out], got {:?}",
                kernels.shape()
            )));
        }
        let out = kernels.shape()[2];
        if bias.shape() != [out] {
            return Err(Error::shape(format!(
                "bias must be [{out}], got {:?}",
                bias.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("stride must be >= 1"));
        }
        Ok(ConvLayerState {
            kernels,
            bias,
            stride,
            padding,
        })
    }

    pub fn zeros(width: usize, in_channels: usize, out_channels: usize, stride: usize, padding: Padding) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[width, in_channels, out_channels])?,
            Tensor::zeros(&[out_channels])?,
            stride,
            padding,
        )
    }

    pub fn width(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn geometry(&self, len: usize) -> Result<(usize, usize)> {
        conv_geometry(len, self.width(), self.stride, self.padding)
    }

    fn check_input(&self, cin: usize) -> Result<()> {
        if cin != self.in_channels() {
            return Err(Error::shape(format!(
                "input has {cin} channels, kernels expect {}",
                self.in_channels()
            )));
        }
        Ok(())
    }

    /// Kernels rearranged `[out_channels, width * in_channels]`, so that one
    /// output value is a contiguous dot product with the input window.
    pub(crate) fn packed(&self) -> Vec<T> {
        let (w, cin, cout) = (self.width(), self.in_channels(), self.out_channels());
        let k = self.kernels.data();
        let mut out = vec![T::zero(); k.len()];
        for kk in 0..w {
            for ci in 0..cin {
                for co in 0..cout {
                    out[co * w * cin + kk * cin + ci] = k[(kk * cin + ci) * cout + co];
                }
            }
        }
        out
    }

    /// Inverse of [`Self::packed`], for gradients accumulated packed.
    pub(crate) fn unpack(&self, packed: &[T]) -> Vec<T> {
        let (w, cin, cout) = (self.width(), self.in_channels(), self.out_channels());
        let mut out = vec![T::zero(); packed.len()];
        for co in 0..cout {
            for j in 0..w * cin {
                out[j * cout + co] = packed[co * w * cin + j];
            }
        }
        out
    }

    /// In-range kernel taps `[kmin, kmax)` and first input row for output `o`.
    #[inline]
    fn taps(&self, o: usize, pad: usize, len: usize) -> (usize, usize, usize) {
        let start = (o * self.stride) as isize - pad as isize;
        let kmin = (-start).max(0) as usize;
        let kmax = ((len as isize - start).min(self.width() as isize)).max(kmin as isize) as usize;
        (kmin, kmax, (start + kmin as isize).max(0) as usize)
    }

    /// Writes one sample's output into `out`, a `[out_len, out_stride]` row
    /// block, at channel offset `ch_off`. `kt` comes from [`Self::packed`].
    /// Used directly by the multi-branch layer so branch outputs land
    /// concatenated.
    pub(crate) fn forward_sample(&self, kt: &[T], x: &[T], len: usize, out: &mut [T], out_stride: usize, ch_off: usize) {
        let (w, cin, cout) = (self.width(), self.in_channels(), self.out_channels());
        let (lo, pad) = self.geometry(len).expect("geometry validated by caller");
        let row = w * cin;
        let b = self.bias.data();
        for o in 0..lo {
            let (kmin, kmax, p0) = self.taps(o, pad, len);
            let xs = &x[p0 * cin..(p0 + kmax - kmin) * cin];
            let orow = &mut out[o * out_stride + ch_off..o * out_stride + ch_off + cout];
            for (co, r) in orow.iter_mut().enumerate() {
                *r = b[co] + dot(&kt[co * row + kmin * cin..co * row + kmax * cin], xs);
            }
        }
    }

    /// Accumulates one sample's gradients given upstream rows at `ch_off`.
    /// Kernel gradients accumulate packed into `dkt`; the input gradient is
    /// skipped when `dx` is `None`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_sample(
        &self,
        kt: &[T],
        x: &[T],
        len: usize,
        g: &[T],
        g_stride: usize,
        ch_off: usize,
        mut dx: Option<&mut [T]>,
        dkt: &mut [T],
        db: &mut [T],
    ) {
        let (w, cin, cout) = (self.width(), self.in_channels(), self.out_channels());
        let (lo, pad) = self.geometry(len).expect("geometry validated by caller");
        let row = w * cin;
        for o in 0..lo {
            let (kmin, kmax, p0) = self.taps(o, pad, len);
            let span = p0 * cin..(p0 + kmax - kmin) * cin;
            let grow = &g[o * g_stride + ch_off..o * g_stride + ch_off + cout];
            for (co, &gv) in grow.iter().enumerate() {
                if gv == T::zero() {
                    continue;
                }
                db[co] = db[co] + gv;
                let taps = co * row + kmin * cin..co * row + kmax * cin;
                axpy(&mut dkt[taps.clone()], gv, &x[span.clone()]);
                if let Some(dx) = dx.as_deref_mut() {
                    axpy(&mut dx[span.clone()], gv, &kt[taps]);
                }
            }
        }
    }
}

fn out_shape(input_rank: usize, b: usize, lo: usize, c: usize) -> Vec<usize> {
    if input_rank == 3 {
        vec![b, lo, c]
    } else {
        vec![lo, c]
    }
}

pub fn conv1d_forward<T: Real>(input: &Tensor<T>, layer: &ConvLayerState<T>) -> Result<Tensor<T>> {
    let (b, l, cin) = input.blc();
    layer.check_input(cin)?;
    input.ensure_finite("convolution input")?;
    let (lo, _) = layer.geometry(l)?;
    let cout = layer.out_channels();
    let mut out = vec![T::zero(); b * lo * cout];
    let kt = layer.packed();
    for s in 0..b {
        layer.forward_sample(
            &kt,
            &input.data()[s * l * cin..(s + 1) * l * cin],
            l,
            &mut out[s * lo * cout..(s + 1) * lo * cout],
            cout,
            0,
        );
    }
    Tensor::new(&out_shape(input.rank(), b, lo, cout), out)
}

pub fn conv1d_backward<T: Real>(
    input: &Tensor<T>,
    layer: &ConvLayerState<T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (b, l, cin) = input.blc();
    layer.check_input(cin)?;
    let (lo, _) = layer.geometry(l)?;
    let cout = layer.out_channels();
    let expected = out_shape(input.rank(), b, lo, cout);
    if upstream.shape() != expected.as_slice() {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match convolution output {expected:?}",
            upstream.shape()
        )));
    }
    let mut dx = vec![T::zero(); input.len()];
    let mut dk = vec![T::zero(); layer.kernels.len()];
    let mut db = vec![T::zero(); cout];
    let kt = layer.packed();
    for s in 0..b {
        layer.backward_sample(
            &kt,
            &input.data()[s * l * cin..(s + 1) * l * cin],
            l,
            &upstream.data()[s * lo * cout..(s + 1) * lo * cout],
            cout,
            0,
            Some(&mut dx[s * l * cin..(s + 1) * l * cin]),
            &mut dk,
            &mut db,
        );
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape(), dx)?,
        kernels: Tensor::new(layer.kernels.shape(), layer.unpack(&dk))?,
        bias: Tensor::new(&[cout], db)?,
    })
}
