use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::vecops::{axpy, dot};

/// Fully connected layer, `z_j = sum_i W_ij a_i + b_j`, weights `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayerState<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> DenseLayerState<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::shape(format!("dense weights must be [in, out], got {:?}", weights.shape())));
        }
        if bias.shape() != [weights.shape()[1]] {
            return Err(Error::shape(format!(
                "dense bias {:?} does not match {} outputs",
                bias.shape(),
                weights.shape()[1]
            )));
        }
        Ok(DenseLayerState { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Result<Self> {
        Self::new(Tensor::zeros(&[inputs, outputs])?, Tensor::zeros(&[outputs])?)
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    fn batch_of(&self, input: &Tensor<T>) -> Result<usize> {
        let (b, width) = match input.shape() {
            [w] => (1, *w),
            [b, w] => (*b, *w),
            s => return Err(Error::shape(format!("dense input must be [batch, features], got {s:?}"))),
        };
        if width != self.inputs() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {width}",
                self.inputs()
            )));
        }
        Ok(b)
    }
}

pub fn dense_forward<T: Real>(input: &Tensor<T>, layer: &DenseLayerState<T>) -> Result<Tensor<T>> {
    let b = layer.batch_of(input)?;
    let (n_in, n_out) = (layer.inputs(), layer.outputs());
    let w = layer.weights.data();
    let mut out = Vec::with_capacity(b * n_out);
    for a in input.data().chunks_exact(n_in) {
        let start = out.len();
        out.extend_from_slice(layer.bias.data());
        let z = &mut out[start..];
        for (i, &ai) in a.iter().enumerate() {
            for (zj, &wij) in z.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                *zj = *zj + ai * wij;
            }
        }
    }
    let shape = if input.rank() == 1 { vec![n_out] } else { vec![b, n_out] };
    Tensor::new(&shape, out)
}

pub fn dense_backward<T: Real>(input: &Tensor<T>, layer: &DenseLayerState<T>, upstream: &Tensor<T>) -> Result<DenseGrads<T>> {
    let b = layer.batch_of(input)?;
    let (n_in, n_out) = (layer.inputs(), layer.outputs());
    if upstream.len() != b * n_out {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match dense output [{b}, {n_out}]",
            upstream.shape()
        )));
    }
    let w = layer.weights.data();
    let mut dx = vec![T::zero(); input.len()];
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); n_out];
    for ((a, g), d) in input
        .data()
        .chunks_exact(n_in)
        .zip(upstream.data().chunks_exact(n_out))
        .zip(dx.chunks_exact_mut(n_in))
    {
        for (dbj, &gj) in db.iter_mut().zip(g) {
            *dbj = *dbj + gj;
        }
        for i in 0..n_in {
            let wrow = &w[i * n_out..(i + 1) * n_out];
            let dwrow = &mut dw[i * n_out..(i + 1) * n_out];
            axpy(dwrow, a[i], g);
            d[i] = dot(wrow, g);
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(input.shape(), dx)?,
        weights: Tensor::new(layer.weights.shape(), dw)?,
        bias: Tensor::new(&[n_out], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_multiply() {
        let l = DenseLayerState::new(
            Tensor::<f64>::from_f64(&[2, 2], &[1.0, 1.0, 1.0, -1.0]).unwrap(),
            Tensor::<f64>::from_f64(&[2], &[0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let y = dense_forward(&Tensor::<f64>::from_f64(&[2], &[1.0, 2.0]).unwrap(), &l).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0]);
    }

    #[test]
    fn identity_passthrough() {
        let l = DenseLayerState::new(
            Tensor::<f64>::from_f64(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[3]).unwrap(),
        )
        .unwrap();
        let x = Tensor::<f64>::from_f64(&[2, 3], &[1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        assert_eq!(dense_forward(&x, &l).unwrap().data(), x.data());
    }

    #[test]
    fn width_mismatch_rejected() {
        let l = DenseLayerState::<f64>::zeros(3, 2).unwrap();
        assert!(dense_forward(&Tensor::zeros(&[2, 4]).unwrap(), &l).is_err());
        assert!(dense_backward(&Tensor::zeros(&[2, 3]).unwrap(), &l, &Tensor::zeros(&[2, 3]).unwrap()).is_err());
    }
}
