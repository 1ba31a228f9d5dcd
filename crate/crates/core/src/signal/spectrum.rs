//! One-sided magnitude spectrum.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Bin spacing in Hz.
    pub resolution: f64,
    /// `|X_k| * 2 / N` for `k` in `0..=N/2`, so a unit sinusoid centred on
    /// a bin reads 1.
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution
    }

    pub fn bin(&self, frequency: f64) -> usize {
        ((frequency / self.resolution).round() as usize).min(self.magnitudes.len().saturating_sub(1))
    }

    /// Indices of the `n` largest local maxima, strongest first. DC is never
    /// reported.
    pub fn peaks(&self, n: usize) -> Vec<usize> {
        let m = &self.magnitudes;
        let mut idx: Vec<usize> = (1..m.len().saturating_sub(1))
            .filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1])
            .collect();
        idx.sort_by(|&a, &b| m[b].total_cmp(&m[a]));
        idx.truncate(n);
        idx
    }
}

/// Spectrum of `samples` with the mean removed and no window applied.
pub fn magnitude_spectrum(samples: &[f64], sample_rate: f64) -> Spectrum {
    let n = samples.len();
    if n == 0 {
        return Spectrum {
            resolution: 0.0,
            magnitudes: Vec::new(),
        };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 2.0 / n as f64;
    Spectrum {
        resolution: sample_rate / n as f64,
        magnitudes: buf[..=n / 2].iter().map(|c| c.norm() * scale).collect(),
    }
}
