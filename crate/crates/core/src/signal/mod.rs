//! Vibration waveform ingestion, segmentation and synthesis.

pub mod augment;
pub mod dataset;
pub mod io;
pub mod manifest;
pub mod mat;
pub mod spectrum;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use augment::{overlap_sample, points_per_rev, window_starts, zscore_normalize, AugmentConfig};
pub use dataset::{build_dataset, DatasetConfig, LabeledWindows, Partition, SegmentedDataset, SplitRatio};
pub use spectrum::{magnitude_spectrum, Spectrum};
pub use synth::{synth_generate, SynthConfig};

/// Bearing condition. The integer codes are part of every file format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    /// Rolling element (ball) fault.
    Ba = 0,
    /// Inner race fault.
    IR = 1,
    /// Normal.
    No = 2,
    /// Outer race fault.
    OR = 3,
    /// Ball mixing.
    BM = 4,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [ClassLabel::Ba, ClassLabel::IR, ClassLabel::No, ClassLabel::OR, ClassLabel::BM];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown class code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Ba => "Ba",
            ClassLabel::IR => "IR",
            ClassLabel::No => "No",
            ClassLabel::OR => "OR",
            ClassLabel::BM => "BM",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(code) = s.parse::<usize>() {
            return Self::from_code(code);
        }
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown class label {s:?}")))
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Code(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Code(c) => ClassLabel::from_code(c),
            Repr::Name(n) => n.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveformRecord {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub rpm: Option<f64>,
    pub source_id: String,
    pub class_label: Option<ClassLabel>,
}

/// Sidecar metadata attached to samples read from a file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordMeta {
    pub sample_rate: f64,
    pub rpm: Option<f64>,
    pub source_id: String,
    pub class_label: Option<ClassLabel>,
}

impl WaveformRecord {
    pub fn new(samples: Vec<f64>, meta: RecordMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dataset(format!("{}: record has no samples", meta.source_id)));
        }
        if !(meta.sample_rate > 0.0 && meta.sample_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "{}: sample rate must be positive, got {}",
                meta.source_id, meta.sample_rate
            )));
        }
        Ok(WaveformRecord {
            samples,
            sample_rate: meta.sample_rate,
            rpm: meta.rpm,
            source_id: meta.source_id,
            class_label: meta.class_label,
        })
    }
}
