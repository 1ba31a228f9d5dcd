use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Real, Tensor};

pub const DEFAULT_RATE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and, in train mode, the per-unit
/// multiplier (0 or `1 / (1 - rate)`) needed by [`dropout_backward`].
pub fn dropout<T: Real>(
    input: &Tensor<T>,
    rate: f64,
    mode: DropoutMode,
    rng: Option<&mut SplitMix64>,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == DropoutMode::Eval || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let rng = rng.ok_or_else(|| Error::invalid("train-mode dropout needs a seeded generator"))?;
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.next_f64() < rate { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((Tensor::new(input.shape(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(upstream: &Tensor<T>, mask: Option<&[T]>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(upstream.clone()),
        Some(m) => {
            if m.len() != upstream.len() {
                return Err(Error::shape("dropout mask does not match upstream gradient"));
            }
            Tensor::new(upstream.shape(), upstream.data().iter().zip(m).map(|(&g, &k)| g * k).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cases() {
        let x = Tensor::<f64>::from_f64(&[4], &[1.0, -2.0, 3.0, 0.5]).unwrap();
        let mut rng = SplitMix64::new(1);
        let (y, m) = dropout(&x, 0.0, DropoutMode::Train, Some(&mut rng)).unwrap();
        assert_eq!(y, x);
        assert!(m.is_none());
        assert_eq!(dropout(&x, 0.5, DropoutMode::Eval, None).unwrap().0, x);
        assert_eq!(dropout(&x, 0.0, DropoutMode::Eval, None).unwrap().0, x);
    }

    #[test]
    fn rate_one_rejected() {
        let x = Tensor::<f64>::from_f64(&[1], &[1.0]).unwrap();
        assert!(dropout(&x, 1.0, DropoutMode::Eval, None).is_err());
        assert!(dropout(&x, 0.5, DropoutMode::Train, None).is_err());
    }

    #[test]
    fn survivor_statistics() {
        let n = 10_000;
        let x = Tensor::new(&[n], vec![1.0f64; n]).unwrap();
        let mut rng = SplitMix64::new(2024);
        let (y, mask) = dropout(&x, 0.5, DropoutMode::Train, Some(&mut rng)).unwrap();
        let survivors = mask.unwrap().iter().filter(|&&m| m > 0.0).count();
        let frac = survivors as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "survivor fraction {frac}");
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "output mean {mean}");
    }

    #[test]
    fn backward_reuses_mask() {
        let x = Tensor::<f64>::from_f64(&[6], &[1.0; 6]).unwrap();
        let mut rng = SplitMix64::new(5);
        let (y, mask) = dropout(&x, 0.5, DropoutMode::Train, Some(&mut rng)).unwrap();
        let g = dropout_backward(&x, mask.as_deref()).unwrap();
        assert_eq!(g, y);
    }
}
