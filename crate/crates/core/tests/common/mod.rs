//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use bearing_diag::nn::gradcheck::{
    grad_check, ActivationProbe, BatchNormProbe, ConvProbe, DenseProbe, PoolProbe, SoftmaxCrossEntropyProbe,
};
use bearing_diag::nn::{ActivationKind, BatchNormState, ConvLayerState, DenseLayerState, Padding, PoolKind};
use bearing_diag::rng::SplitMix64;
use bearing_diag::signal::{
    build_dataset, synth_generate, AugmentConfig, ClassLabel, DatasetConfig, SegmentedDataset, SplitRatio, SynthConfig,
};
use bearing_diag::tensor::Tensor;

pub const GRAD_TOLERANCE: f64 = 1e-5;
pub const GRAD_STEP: f64 = 1e-5;

/// Window count by walking the starts one at a time.
pub fn naive_window_count(len: usize, window: usize, offset: usize, max: Option<usize>) -> usize {
    let mut n = 0;
    let mut start = 0;
    while start + window <= len {
        if max.is_some_and(|m| n == m) {
            break;
        }
        n += 1;
        start += offset;
    }
    n
}

/// Textbook strided cross-correlation of one `[L, Cin]` sample with explicit
/// zero padding on the left.
pub fn naive_conv(x: &[f64], l: usize, cin: usize, k: &[f64], w: usize, cout: usize, bias: &[f64], stride: usize, pad_left: usize, out_len: usize) -> Vec<f64> {
    let mut y = vec![0.0; out_len * cout];
    for t in 0..out_len {
        for o in 0..cout {
            let mut acc = bias[o];
            for j in 0..w {
                let pos = (t * stride + j) as isize - pad_left as isize;
                if pos < 0 || pos as usize >= l {
                    continue;
                }
                for c in 0..cin {
                    acc += k[(j * cin + c) * cout + o] * x[pos as usize * cin + c];
                }
            }
            y[t * cout + o] = acc;
        }
    }
    y
}

pub fn random_tensor(shape: &[usize], rng: &mut SplitMix64, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

fn pick(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Worst relative error per layer kind over `cases` seeded problems each.
pub fn gradient_suite(cases: u64) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut record = |name: &'static str, f: &dyn Fn(&mut SplitMix64) -> f64| {
        let worst = (0..cases)
            .map(|s| f(&mut SplitMix64::derive(s, name.len() as u64 * 7919)))
            .fold(0.0f64, f64::max);
        out.push((name, worst));
    };

    record("conv", &|rng| {
        let (b, l, cin, cout) = (pick(rng, 1, 2), pick(rng, 4, 12), pick(rng, 1, 3), pick(rng, 1, 3));
        let w = pick(rng, 1, 5.min(l));
        let stride = pick(rng, 1, 3);
        let padding = if rng.below(2) == 0 { Padding::Same } else { Padding::Valid };
        let layer = ConvLayerState::new(
            random_tensor(&[w, cin, cout], rng, -1.0, 1.0),
            random_tensor(&[cout], rng, -0.5, 0.5),
            stride,
            padding,
        )
        .unwrap();
        let x = random_tensor(&[b, l, cin], rng, -1.0, 1.0);
        grad_check(&mut ConvProbe(layer), &x, GRAD_STEP).unwrap()
    });
    record("dense", &|rng| {
        let (b, i, o) = (pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 6));
        let layer = DenseLayerState::new(random_tensor(&[i, o], rng, -1.0, 1.0), random_tensor(&[o], rng, -0.5, 0.5)).unwrap();
        grad_check(&mut DenseProbe(layer), &random_tensor(&[b, i], rng, -1.0, 1.0), GRAD_STEP).unwrap()
    });
    record("batchnorm-train", &|rng| {
        let (b, l, c) = (pick(rng, 2, 3), pick(rng, 2, 5), pick(rng, 1, 3));
        let mut s = BatchNormState::new(c);
        s.scale = (0..c).map(|_| rng.uniform(0.5, 1.5)).collect();
        s.offset = (0..c).map(|_| rng.uniform(-0.5, 0.5)).collect();
        grad_check(&mut BatchNormProbe(s), &random_tensor(&[b, l, c], rng, -2.0, 2.0), GRAD_STEP).unwrap()
    });
    for (name, kind) in [
        ("relu", ActivationKind::Relu),
        ("sigmoid", ActivationKind::Sigmoid),
        ("tanh", ActivationKind::Tanh),
    ] {
        record(name, &move |rng| {
            let x = random_tensor(&[2, pick(rng, 2, 8), pick(rng, 1, 3)], rng, -2.0, 2.0);
            grad_check(&mut ActivationProbe(kind), &x, GRAD_STEP).unwrap()
        });
    }
    for (name, kind) in [("max-pool", PoolKind::Max), ("mean-pool", PoolKind::Mean)] {
        record(name, &move |rng| {
            let l = pick(rng, 4, 12);
            let width = pick(rng, 1, 3);
            let stride = pick(rng, 1, 3);
            let x = random_tensor(&[2, l, pick(rng, 1, 3)], rng, -1.0, 1.0);
            grad_check(&mut PoolProbe { width, stride, kind }, &x, GRAD_STEP).unwrap()
        });
    }
    record("softmax-cross-entropy", &|rng| {
        let (b, k) = (pick(rng, 1, 5), pick(rng, 2, 6));
        let labels = (0..b).map(|_| rng.below(k)).collect();
        let x = random_tensor(&[b, k], rng, -3.0, 3.0);
        grad_check(&mut SoftmaxCrossEntropyProbe { labels }, &x, GRAD_STEP).unwrap()
    });
    out
}

/// Records of every class from one synthetic operating condition.
pub fn synth_records(noise: f64, rpm: f64, records: usize, duration: f64, seed: u64) -> Vec<bearing_diag::signal::WaveformRecord> {
    let cfg = SynthConfig {
        duration,
        noise_sigma: noise,
        seed,
        ..SynthConfig::for_speed(rpm)
    };
    ClassLabel::ALL
        .iter()
        .flat_map(|&c| synth_generate(&cfg, c, records).unwrap())
        .collect()
}

/// 4:1 split of `per_class` windows of 4096 at offset 1024.
pub fn synth_dataset(noise: f64, rpm: f64, records: usize, duration: f64, per_class: usize, seed: u64) -> SegmentedDataset {
    let cfg = DatasetConfig {
        augment: AugmentConfig {
            window: 4096,
            offset: 1024,
            max_windows: None,
        },
        per_class: Some(per_class),
    };
    build_dataset(&synth_records(noise, rpm, records, duration, seed), &cfg, SplitRatio::default(), seed).unwrap()
}

/// The five-class desk-scale benchmark: 2,000 train and 500 test windows.
pub fn benchmark_dataset() -> SegmentedDataset {
    synth_dataset(0.1, 1500.0, 5, 2.5, 500, 1)
}

// MAT-5 fixtures, assembled independently of the crate's writer.

#[derive(Clone, Copy)]
pub enum Order {
    Le,
    Be,
}

struct Fx(Order);

impl Fx {
    fn u32(&self, v: u32) -> [u8; 4] {
        match self.0 {
            Order::Le => v.to_le_bytes(),
            Order::Be => v.to_be_bytes(),
        }
    }

    fn tag(&self, kind: u32, n: usize) -> Vec<u8> {
        [self.u32(kind), self.u32(n as u32)].concat()
    }

    fn header(&self) -> Vec<u8> {
        let mut h = b"MATLAB 5.0 MAT-file, test fixture".to_vec();
        h.resize(116, b' ');
        h.extend_from_slice(&[0; 8]);
        match self.0 {
            Order::Le => h.extend_from_slice(&[0x00, 0x01, b'I', b'M']),
            Order::Be => h.extend_from_slice(&[0x01, 0x00, b'M', b'I']),
        }
        h
    }

    /// `miMATRIX` of class double holding a column vector.
    fn matrix(&self, name: &str, values: &[f64]) -> Vec<u8> {
        let mut body = self.tag(6, 8);
        body.extend_from_slice(&self.u32(6));
        body.extend_from_slice(&self.u32(0));
        body.extend(self.tag(5, 8));
        body.extend_from_slice(&self.u32(values.len() as u32));
        body.extend_from_slice(&self.u32(1));
        body.extend(self.tag(1, name.len()));
        body.extend_from_slice(name.as_bytes());
        body.resize(body.len().div_ceil(8) * 8, 0);
        body.extend(self.tag(9, values.len() * 8));
        for v in values {
            let b = match self.0 {
                Order::Le => v.to_le_bytes(),
                Order::Be => v.to_be_bytes(),
            };
            body.extend_from_slice(&b);
        }
        let mut out = self.tag(14, body.len());
        out.extend(body);
        out
    }

    fn compressed(&self, element: &[u8]) -> Vec<u8> {
        let mut z = ZlibEncoder::new(Vec::new(), Compression::default());
        z.write_all(element).unwrap();
        let packed = z.finish().unwrap();
        let mut out = self.tag(15, packed.len());
        out.extend(packed);
        out
    }
}

pub const FIXTURE_VALUES: [f64; 5] = [0.125, -3.5, 1e-300, f64::MAX, -0.0];

pub fn mat_fixture(order: Order, compressed: bool) -> Vec<u8> {
    let fx = Fx(order);
    let mut bytes = fx.header();
    for (name, vals) in [("X118_DE_time", &FIXTURE_VALUES[..]), ("X118RPM", &[1796.0][..])] {
        let m = fx.matrix(name, vals);
        bytes.extend(if compressed { fx.compressed(&m) } else { m });
    }
    bytes
}

