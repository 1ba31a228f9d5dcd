use crate::rng::SplitMix64;
use crate::tensor::Real;

/// He-uniform draw, bound `sqrt(6 / fan_in)`.
pub fn he_uniform<T: Real>(n: usize, fan_in: usize, rng: &mut SplitMix64) -> Vec<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| T::of(rng.uniform(-bound, bound))).collect()
}
