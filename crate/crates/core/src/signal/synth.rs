//! Synthetic five-class bearing vibration.
//!
//! * `No`: shaft fundamental plus second harmonic.
//! * `Ba`, `IR`, `OR`: a weak shaft component plus a periodic train of
//!   exponentially decaying resonance bursts at the class fault frequency.
//!   Inner-race burst amplitudes are modulated at the shaft frequency.
//! * `BM`: the normal signal amplitude-modulated at the cage frequency, with
//!   added tones at `f_c` and `n * f_c +/- f_n` for `n` in 1..=3.
//!
//! The deterministic part of every record is scaled to unit RMS before
//! Gaussian noise is added, so all classes share the same signal level.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::{ClassLabel, RecordMeta, WaveformRecord};

/// Characteristic orders (multiples of shaft frequency) of a seven-ball
/// bearing with ball/pitch diameter ratio 0.254 and zero contact angle.
pub const BALL_SPIN_ORDER: f64 = 1.84;
pub const INNER_RACE_ORDER: f64 = 4.39;
pub const OUTER_RACE_ORDER: f64 = 2.61;
pub const DEFAULT_CAGE_ORDER: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultFrequencies {
    pub ball: f64,
    pub inner: f64,
    pub outer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: f64,
    pub rpm: f64,
    /// Record length in seconds.
    pub duration: f64,
    pub cage_frequency: f64,
    pub fault_frequencies: FaultFrequencies,
    pub resonance_carrier: f64,
    /// Burst envelope decay rate, 1/s.
    pub decay: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::for_speed(1500.0)
    }
}

impl SynthConfig {
    /// Defaults at 48,128 Hz with every rotation frequency derived from `rpm`.
    pub fn for_speed(rpm: f64) -> Self {
        let f_n = rpm / 60.0;
        SynthConfig {
            sample_rate: 48_128.0,
            rpm,
            duration: 2.0,
            cage_frequency: DEFAULT_CAGE_ORDER * f_n,
            fault_frequencies: FaultFrequencies {
                ball: BALL_SPIN_ORDER * f_n,
                inner: INNER_RACE_ORDER * f_n,
                outer: OUTER_RACE_ORDER * f_n,
            },
            resonance_carrier: 3000.0,
            decay: 800.0,
            noise_sigma: 0.1,
            seed: 0,
        }
    }

    /// Same bearing at another speed: cage and fault frequencies scale with
    /// the shaft, the structural resonance does not.
    pub fn with_rpm(&self, rpm: f64) -> Self {
        let k = rpm / self.rpm;
        SynthConfig {
            rpm,
            cage_frequency: self.cage_frequency * k,
            fault_frequencies: FaultFrequencies {
                ball: self.fault_frequencies.ball * k,
                inner: self.fault_frequencies.inner * k,
                outer: self.fault_frequencies.outer * k,
            },
            ..self.clone()
        }
    }

    pub fn shaft_frequency(&self) -> f64 {
        self.rpm / 60.0
    }

    pub fn fault_frequency(&self, class: ClassLabel) -> Option<f64> {
        match class {
            ClassLabel::Ba => Some(self.fault_frequencies.ball),
            ClassLabel::IR => Some(self.fault_frequencies.inner),
            ClassLabel::OR => Some(self.fault_frequencies.outer),
            ClassLabel::No | ClassLabel::BM => None,
        }
    }

    pub fn samples_per_record(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if !(self.sample_rate > 0.0 && self.rpm > 0.0 && self.duration > 0.0 && self.decay > 0.0) {
            return Err(Error::invalid("sample rate, speed, duration and decay must be positive"));
        }
        if self.samples_per_record() == 0 {
            return Err(Error::invalid("duration yields no samples"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be >= 0"));
        }
        let f = self.fault_frequencies;
        let highest = [
            2.0 * self.shaft_frequency(),
            3.0 * self.cage_frequency + self.shaft_frequency(),
            f.ball,
            f.inner,
            f.outer,
            self.resonance_carrier,
        ];
        if let Some(bad) = highest.iter().find(|&&h| !(h > 0.0 && h < nyquist)) {
            return Err(Error::invalid(format!("frequency {bad} Hz is not within (0, {nyquist}) Hz")));
        }
        Ok(())
    }
}

fn shaft_signal(t: f64, f_n: f64, p1: f64, p2: f64) -> f64 {
    (TAU * f_n * t + p1).sin() + 0.3 * (TAU * 2.0 * f_n * t + p2).sin()
}

fn add_burst_train(out: &mut [f64], cfg: &SynthConfig, f_fault: f64, modulate: Option<(f64, f64)>, rng: &mut SplitMix64) {
    let fs = cfg.sample_rate;
    let period = 1.0 / f_fault;
    // bursts are negligible after 12 time constants
    let burst_len = ((12.0 / cfg.decay) * fs).ceil() as usize;
    let t_end = out.len() as f64 / fs;
    let mut t_k = rng.uniform(0.0, period) - (burst_len as f64 / fs / period).ceil() * period;
    while t_k < t_end {
        let amp = match modulate {
            Some((f_m, phase)) => 1.0 + 0.6 * (TAU * f_m * t_k + phase).cos(),
            None => 1.0,
        };
        let first = (t_k * fs).ceil().max(0.0) as usize;
        let last = ((t_k * fs).ceil() as isize + burst_len as isize).clamp(0, out.len() as isize) as usize;
        for (i, o) in out.iter_mut().enumerate().take(last).skip(first) {
            let tau = i as f64 / fs - t_k;
            *o += amp * (-cfg.decay * tau).exp() * (TAU * cfg.resonance_carrier * tau).sin();
        }
        t_k += period;
    }
}

fn generate_one(cfg: &SynthConfig, class: ClassLabel, index: usize) -> Vec<f64> {
    let mut rng = SplitMix64::derive(cfg.seed, ((class.code() as u64) << 32) | index as u64);
    let n = cfg.samples_per_record();
    let fs = cfg.sample_rate;
    let f_n = cfg.shaft_frequency();
    let f_c = cfg.cage_frequency;
    let (p1, p2) = (rng.uniform(0.0, TAU), rng.uniform(0.0, TAU));
    let mut x: Vec<f64> = match class {
        ClassLabel::No => (0..n).map(|i| shaft_signal(i as f64 / fs, f_n, p1, p2)).collect(),
        ClassLabel::Ba | ClassLabel::IR | ClassLabel::OR => {
            let mut x: Vec<f64> = (0..n).map(|i| 0.3 * shaft_signal(i as f64 / fs, f_n, p1, p2)).collect();
            let f_fault = cfg.fault_frequency(class).expect("fault class");
            let modulate = (class == ClassLabel::IR).then(|| (f_n, rng.uniform(0.0, TAU)));
            add_burst_train(&mut x, cfg, f_fault, modulate, &mut rng);
            x
        }
        ClassLabel::BM => {
            let pm = rng.uniform(0.0, TAU);
            let mut tones = vec![(f_c, 0.5)];
            for k in 1..=3 {
                let kf = k as f64 * f_c;
                tones.push((kf + f_n, 0.3));
                tones.push(((kf - f_n).abs(), 0.3));
            }
            let tones: Vec<(f64, f64, f64)> = tones
                .into_iter()
                .filter(|&(f, _)| f > 0.0)
                .map(|(f, a)| (f, a, rng.uniform(0.0, TAU)))
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    let carrier = (1.0 + 0.5 * (TAU * f_c * t + pm).sin()) * shaft_signal(t, f_n, p1, p2);
                    carrier + tones.iter().map(|&(f, a, p)| a * (TAU * f * t + p).sin()).sum::<f64>()
                })
                .collect()
        }
    };
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    if cfg.noise_sigma > 0.0 {
        x.iter_mut().for_each(|v| *v += cfg.noise_sigma * rng.normal());
    }
    x
}

/// `count` independent records of one class; bitwise reproducible from
/// `cfg.seed`.
pub fn synth_generate(cfg: &SynthConfig, class: ClassLabel, count: usize) -> Result<Vec<WaveformRecord>> {
    cfg.validate()?;
    (0..count)
        .map(|i| {
            WaveformRecord::new(
                generate_one(cfg, class, i),
                RecordMeta {
                    sample_rate: cfg.sample_rate,
                    rpm: Some(cfg.rpm),
                    source_id: format!("synth-{class}-{i}"),
                    class_label: Some(class),
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(duration: f64) -> SynthConfig {
        SynthConfig {
            duration,
            noise_sigma: 0.0,
            ..SynthConfig::default()
        }
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            duration: 0.2,
            seed: 11,
            ..SynthConfig::default()
        };
        for class in ClassLabel::ALL {
            let a = synth_generate(&cfg, class, 2).unwrap();
            let b = synth_generate(&cfg, class, 2).unwrap();
            assert_eq!(a, b);
            assert_ne!(a[0].samples, a[1].samples);
        }
    }

    #[test]
    fn normal_class_is_shaft_periodic() {
        let x = &synth_generate(&quiet(0.5), ClassLabel::No, 1).unwrap()[0].samples;
        let period = 48_128.0 / 25.0;
        let n = 8192;
        let msd = |lag: usize| (0..n).map(|i| (x[i] - x[i + lag]).powi(2)).sum::<f64>() / n as f64;
        let best = (1000..3000).min_by(|&a, &b| msd(a).total_cmp(&msd(b))).unwrap();
        assert!((best as f64 - period).abs() <= 1.0, "best lag {best}");
        assert!(msd(best) < 1e-4);
    }

    #[test]
    fn ball_mixing_spectral_peaks() {
        let cfg = quiet(2.0);
        let x = &synth_generate(&cfg, ClassLabel::BM, 1).unwrap()[0].samples;
        let s = super::super::magnitude_spectrum(x, cfg.sample_rate);
        let (f_c, f_n) = (cfg.cage_frequency, cfg.shaft_frequency());
        let peaks: Vec<f64> = s.peaks(8).iter().map(|&k| s.frequency(k)).collect();
        for target in [f_c, f_n - f_c, f_n + f_c] {
            assert!(
                peaks.iter().any(|&p| (p - target).abs() <= s.resolution),
                "no peak near {target} Hz in {peaks:?}"
            );
        }
    }

    #[test]
    fn rms_is_equalized() {
        let cfg = SynthConfig {
            duration: 0.5,
            ..SynthConfig::default()
        };
        let levels: Vec<f64> = ClassLabel::ALL
            .iter()
            .map(|&c| rms(&synth_generate(&cfg, c, 1).unwrap()[0].samples))
            .collect();
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        assert!(levels.iter().all(|l| (l / mean - 1.0).abs() < 0.1), "{levels:?}");
    }

    #[test]
    fn speed_scaling() {
        let a = SynthConfig::default();
        let b = a.with_rpm(1575.0);
        assert!((b.fault_frequencies.inner / a.fault_frequencies.inner - 1.05).abs() < 1e-12);
        assert!((b.cage_frequency - 0.4 * 26.25).abs() < 1e-12);
        assert_eq!(b.resonance_carrier, a.resonance_carrier);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SynthConfig {
            resonance_carrier: 30_000.0,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&cfg, ClassLabel::No, 1).is_err());
        let cfg = SynthConfig {
            noise_sigma: -1.0,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
