//! Overlap sampling, per-window z-scoring and revolution arithmetic.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentConfig {
    pub window: usize,
    /// Distance between consecutive window starts.
    pub offset: usize,
    pub max_windows: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            window: 4096,
            offset: 4096,
            max_windows: None,
        }
    }
}

/// Starts `0, offset, 2 * offset, ...` of every full window, count
/// `floor((len - window) / offset) + 1`, then capped at `max_windows`.
pub fn window_starts(len: usize, cfg: &AugmentConfig) -> Result<Vec<usize>> {
    if cfg.window == 0 || cfg.offset == 0 {
        return Err(Error::invalid("window and offset must be >= 1"));
    }
    if cfg.window > len {
        return Err(Error::invalid(format!("window {} exceeds signal length {len}", cfg.window)));
    }
    let mut n = (len - cfg.window) / cfg.offset + 1;
    if let Some(cap) = cfg.max_windows {
        n = n.min(cap);
    }
    Ok((0..n).map(|i| i * cfg.offset).collect())
}

pub fn overlap_sample<'a>(samples: &'a [f64], cfg: &AugmentConfig) -> Result<Vec<&'a [f64]>> {
    Ok(window_starts(samples.len(), cfg)?
        .into_iter()
        .map(|s| &samples[s..s + cfg.window])
        .collect())
}

/// Population mean and standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(x - mean) / std` with the population standard deviation.
pub fn zscore_normalize(window: &[f64]) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(Error::DegenerateSegment);
    }
    let (mean, std) = mean_std(window);
    // relative floor so rounding residue of a constant window still counts as zero spread
    if !std.is_finite() || std <= 1e-12 * (1.0 + mean.abs()) {
        return Err(Error::DegenerateSegment);
    }
    Ok(window.iter().map(|v| (v - mean) / std).collect())
}

/// Samples captured during one shaft revolution, `floor(60 f / v)`.
pub fn points_per_rev(sample_rate: f64, rpm: f64) -> Result<usize> {
    if !(sample_rate > 0.0 && rpm > 0.0 && sample_rate.is_finite() && rpm.is_finite()) {
        return Err(Error::invalid("sample rate and speed must be positive"));
    }
    let x = 60.0 * sample_rate / rpm;
    let r = x.round();
    // exact divisions computed in floating point may land a hair below the integer
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        Ok(r as usize)
    } else {
        Ok(x.floor() as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_counts() {
        let cfg = AugmentConfig {
            window: 4,
            offset: 2,
            max_windows: None,
        };
        assert_eq!(window_starts(10, &cfg).unwrap(), vec![0, 2, 4, 6]);
        let one = AugmentConfig { offset: 7, ..cfg };
        assert_eq!(window_starts(10, &one).unwrap(), vec![0]);
        let big = AugmentConfig { window: 11, ..cfg };
        assert!(window_starts(10, &big).is_err());
    }

    #[test]
    fn long_record_count() {
        let cfg = AugmentConfig {
            window: 4096,
            offset: 487,
            max_windows: None,
        };
        assert_eq!(window_starts(491_520, &cfg).unwrap().len(), 1001);
        let capped = AugmentConfig {
            max_windows: Some(1000),
            ..cfg
        };
        assert_eq!(window_starts(491_520, &capped).unwrap().len(), 1000);
    }

    #[test]
    fn zscore() {
        let z = zscore_normalize(&[1.0, 2.0, 3.0]).unwrap();
        let e = 1.224_744_871_391_589;
        assert!((z[0] + e).abs() < 1e-12 && z[1].abs() < 1e-15 && (z[2] - e).abs() < 1e-12);
        let again = zscore_normalize(&z).unwrap();
        assert!(z.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(matches!(zscore_normalize(&[5.0, 5.0, 5.0]), Err(Error::DegenerateSegment)));
        assert!(matches!(zscore_normalize(&[0.1; 97]), Err(Error::DegenerateSegment)));
    }

    #[test]
    fn revolution_points() {
        assert_eq!(points_per_rev(48_128.0, 1_500.0).unwrap(), 1925);
        assert_eq!(points_per_rev(48_000.0, 1_772.0).unwrap(), 1625);
        for (v, k) in [(1772.0, 7usize), (1730.0, 1925), (1500.0, 3)] {
            assert_eq!(points_per_rev(v / 60.0 * k as f64, v).unwrap(), k);
        }
        assert!(points_per_rev(0.0, 10.0).is_err());
    }
}
