//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.epsilon < 1e-3;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// A named, mutable view of one parameter tensor.
pub struct ParamMut<'a, T> {
    pub name: String,
    pub values: &'a mut [T],
}

#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub first_moments: Vec<Vec<T>>,
    pub second_moments: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            first_moments: Vec::new(),
            second_moments: Vec::new(),
            step: 0,
        })
    }
}

/// Applies one update. Moment buffers are created on the first call and must
/// keep matching the parameter shapes afterwards. A non-finite gradient
/// rejects the whole step before anything is modified.
pub fn adam_step<T: Real>(params: &mut [ParamMut<'_, T>], grads: &[Vec<T>], state: &mut OptimizerState<T>) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.values.len() != g.len() {
            return Err(Error::shape(format!(
                "gradient for {} has {} entries, parameter has {}",
                p.name,
                g.len(),
                p.values.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
    }
    if state.first_moments.is_empty() {
        state.first_moments = params.iter().map(|p| vec![T::zero(); p.values.len()]).collect();
        state.second_moments = state.first_moments.clone();
    } else if state.first_moments.len() != params.len()
        || state.first_moments.iter().zip(params.iter()).any(|(m, p)| m.len() != p.values.len())
    {
        return Err(Error::shape("optimizer moments do not match parameter shapes"));
    }

    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
    let step_size = T::of(c.learning_rate / bc1);
    let inv_sqrt_bc2 = T::of(1.0 / bc2.sqrt());
    let eps = T::of(c.epsilon);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moments.iter_mut().zip(state.second_moments.iter_mut()))
    {
        for i in 0..g.len() {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            p.values[i] = p.values[i] - step_size * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
        }
    }
    Ok(())
}
