use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    /// Identity, used for the logit layer.
    None,
}

impl ActivationKind {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            ActivationKind::Relu => x.max(T::zero()),
            ActivationKind::Sigmoid => T::one() / (T::one() + (-x).exp()),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::None => x,
        }
    }

    /// Derivative at pre-activation `x`. ReLU's derivative at exactly 0 is 0.
    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            ActivationKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::Sigmoid => {
                let s = self.apply(x);
                s * (T::one() - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            ActivationKind::None => T::one(),
        }
    }
}

pub fn activation_forward<T: Real>(input: &Tensor<T>, kind: ActivationKind) -> Tensor<T> {
    input.map(|x| kind.apply(x))
}

/// Multiplies `upstream` by the elementwise derivative at `input`.
pub fn activation_backward<T: Real>(input: &Tensor<T>, kind: ActivationKind, upstream: &Tensor<T>) -> crate::Result<Tensor<T>> {
    input.same_shape(upstream, "activation upstream gradient")?;
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| g * kind.derivative(x))
        .collect();
    Tensor::new(input.shape(), data)
}
