use bearing_diag::arch::enumerate_first_layer;
use bearing_diag::signal::{magnitude_spectrum, synth_generate, ClassLabel, SynthConfig};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_widths(csv: &str) -> Result<Vec<usize>, String> {
    csv.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| format!("bad width {s:?}")))
        .collect()
}

/// Admissible first-layer plans as a JSON array of
/// `{stride, widths, receptive_fields}`.
pub fn design_json(length: usize, period: usize, layers: usize, widths: &str) -> Result<String, String> {
    let widths = parse_widths(widths)?;
    let plans = enumerate_first_layer(length, period, layers, &widths).map_err(|e| e.to_string())?;
    serde_json::to_string(&plans).map_err(|e| e.to_string())
}

pub fn waveform(class: &str, rpm: f64, noise: f64, seed: u64, samples: usize) -> Result<Vec<f32>, String> {
    let class: ClassLabel = class.parse().map_err(|e: bearing_diag::error::Error| e.to_string())?;
    let base = SynthConfig::for_speed(rpm);
    let cfg = SynthConfig {
        duration: samples as f64 / base.sample_rate,
        noise_sigma: noise,
        seed,
        ..base
    };
    let rec = synth_generate(&cfg, class, 1).map_err(|e| e.to_string())?;
    Ok(rec[0].samples.iter().map(|&v| v as f32).collect())
}

#[wasm_bindgen]
pub fn design_first_layer(length: usize, period: usize, layers: usize, widths: &str) -> Result<String, JsValue> {
    design_json(length, period, layers, widths).map_err(js_err)
}

/// One synthetic record of `samples` points at 48,128 Hz.
#[wasm_bindgen]
pub fn synth_waveform(class: &str, rpm: f64, noise: f64, seed: u32, samples: usize) -> Result<Vec<f32>, JsValue> {
    waveform(class, rpm, noise, seed as u64, samples).map_err(js_err)
}

/// One-sided magnitudes, bin `k` at `k * sample_rate / samples.len()` Hz.
#[wasm_bindgen]
pub fn spectrum(samples: &[f32], sample_rate: f64) -> Vec<f32> {
    let x: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
    magnitude_spectrum(&x, sample_rate).magnitudes.iter().map(|&m| m as f32).collect()
}

#[wasm_bindgen]
pub fn sample_rate() -> f64 {
    SynthConfig::default().sample_rate
}

/// Shaft, cage and fault frequencies at `rpm` as JSON.
#[wasm_bindgen]
pub fn characteristic_frequencies(rpm: f64) -> String {
    let c = SynthConfig::for_speed(rpm);
    let f = c.fault_frequencies;
    format!(
        r#"{{"shaft":{},"cage":{},"ball":{},"inner":{},"outer":{}}}"#,
        c.shaft_frequency(),
        c.cage_frequency,
        f.ball,
        f.inner,
        f.outer
    )
}
