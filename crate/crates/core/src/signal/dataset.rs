//! Labeled, normalized, partitioned window sets and their file format.
//!
//! File layout: magic `MSKADST` and a version byte, a little-endian `u32`
//! length followed by a UTF-8 JSON header, then one label code byte and one
//! partition byte per segment, then all segments as little-endian `f32`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::augment::{overlap_sample, zscore_normalize, AugmentConfig};
use super::{ClassLabel, WaveformRecord};

const MAGIC: &[u8; 7] = b"MSKADST";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

/// Train and test parts, default 4:1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio { train: 4, test: 1 }
    }
}

impl SplitRatio {
    pub fn train_count(&self, n: usize) -> usize {
        let total = (self.train + self.test) as usize;
        (n * self.train as usize + total / 2) / total
    }
}

impl std::str::FromStr for SplitRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("split ratio {s:?} is not of the form a:b")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<u32>()
                .map_err(|_| Error::invalid(format!("bad split ratio {s:?}")))
        };
        let r = SplitRatio {
            train: parse(a)?,
            test: parse(b)?,
        };
        if r.train + r.test == 0 {
            return Err(Error::invalid("split ratio has no parts"));
        }
        Ok(r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub augment: AugmentConfig,
    /// Windows drawn per class before splitting; `None` keeps all.
    pub per_class: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            augment: AugmentConfig::default(),
            per_class: Some(3000),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentedDataset {
    pub window: usize,
    /// `count * window` normalized samples.
    pub segments: Vec<f32>,
    pub labels: Vec<ClassLabel>,
    pub partitions: Vec<Partition>,
}

/// Windows flattened row-major with class indices, the form consumed by
/// training and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindows {
    pub window: usize,
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

impl LabeledWindows {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window(&self, i: usize) -> &[f32] {
        &self.data[i * self.window..(i + 1) * self.window]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn select(&self, idx: &[usize]) -> LabeledWindows {
        let mut data = Vec::with_capacity(idx.len() * self.window);
        for &i in idx {
            data.extend_from_slice(self.window(i));
        }
        LabeledWindows {
            window: self.window,
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Every value multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> LabeledWindows {
        LabeledWindows {
            window: self.window,
            data: self.data.iter().map(|v| v * factor).collect(),
            labels: self.labels.clone(),
        }
    }
}

impl SegmentedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn segment(&self, i: usize) -> &[f32] {
        &self.segments[i * self.window..(i + 1) * self.window]
    }

    pub fn classes(&self) -> Vec<ClassLabel> {
        let mut c: Vec<ClassLabel> = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }

    pub fn count(&self, partition: Partition, class: ClassLabel) -> usize {
        self.labels
            .iter()
            .zip(&self.partitions)
            .filter(|(&l, &p)| l == class && p == partition)
            .count()
    }

    pub fn partition(&self, partition: Partition) -> LabeledWindows {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.partitions[i] == partition).collect();
        let mut data = Vec::with_capacity(idx.len() * self.window);
        for &i in &idx {
            data.extend_from_slice(self.segment(i));
        }
        LabeledWindows {
            window: self.window,
            data,
            labels: idx.iter().map(|&i| self.labels[i].code()).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::json!({
            "window": self.window,
            "count": self.len(),
        })
        .to_string();
        let mut out = Vec::with_capacity(12 + header.len() + self.len() * 2 + self.segments.len() * 4);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend(self.labels.iter().map(|l| l.code() as u8));
        out.extend(self.partitions.iter().map(|p| match p {
            Partition::Train => 0u8,
            Partition::Test => 1u8,
        }));
        for v in &self.segments {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Dataset(m.to_string());
        if bytes.len() < 12 || &bytes[..7] != MAGIC {
            return Err(bad("not a dataset file"));
        }
        if bytes[7] != VERSION {
            return Err(Error::Dataset(format!("unsupported dataset version {}", bytes[7])));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes")) as usize;
        let hend = 12 + hlen;
        let header: serde_json::Value =
            serde_json::from_slice(bytes.get(12..hend).ok_or_else(|| bad("truncated header"))?)?;
        let field = |k: &str| {
            header[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Dataset(format!("header missing {k}")))
        };
        let (window, count) = (field("window")?, field("count")?);
        let expected = hend + 2 * count + 4 * count * window;
        if bytes.len() != expected {
            return Err(Error::Dataset(format!(
                "dataset body is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let labels = bytes[hend..hend + count]
            .iter()
            .map(|&c| ClassLabel::from_code(c as usize))
            .collect::<Result<Vec<_>>>()?;
        let partitions = bytes[hend + count..hend + 2 * count]
            .iter()
            .map(|&p| match p {
                0 => Ok(Partition::Train),
                1 => Ok(Partition::Test),
                other => Err(Error::Dataset(format!("bad partition tag {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let segments = bytes[hend + 2 * count..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("four bytes")))
            .collect();
        Ok(SegmentedDataset {
            window,
            segments,
            labels,
            partitions,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Overlap-samples every record, z-scores each window, draws up to
/// `cfg.per_class` windows per class in seeded random order and splits each
/// class by `split`. The final segment order is shuffled across classes.
pub fn build_dataset(records: &[WaveformRecord], cfg: &DatasetConfig, split: SplitRatio, seed: u64) -> Result<SegmentedDataset> {
    if split.train + split.test == 0 {
        return Err(Error::invalid("split ratio has no parts"));
    }
    let mut by_class: BTreeMap<ClassLabel, Vec<Vec<f64>>> = BTreeMap::new();
    for rec in records {
        let class = rec
            .class_label
            .ok_or_else(|| Error::Dataset(format!("{}: record has no class label", rec.source_id)))?;
        let windows = overlap_sample(&rec.samples, &cfg.augment)
            .map_err(|e| Error::Dataset(format!("{}: {e}", rec.source_id)))?;
        let bucket = by_class.entry(class).or_default();
        for (i, w) in windows.into_iter().enumerate() {
            bucket.push(zscore_normalize(w).map_err(|e| {
                Error::Dataset(format!("{} window {i} (class {class}): {e}", rec.source_id))
            })?);
        }
    }
    if by_class.is_empty() {
        return Err(Error::Dataset("no records".into()));
    }

    let mut rows: Vec<(ClassLabel, Partition, Vec<f64>)> = Vec::new();
    for (class, mut windows) in by_class {
        let n = match cfg.per_class {
            Some(want) if want > windows.len() => {
                return Err(Error::Dataset(format!(
                    "class {class} has {} windows, {want} requested",
                    windows.len()
                )))
            }
            Some(want) => want,
            None => windows.len(),
        };
        let mut rng = SplitMix64::derive(seed, class.code() as u64 + 1);
        rng.shuffle(&mut windows);
        windows.truncate(n);
        let n_train = split.train_count(n);
        for (i, w) in windows.into_iter().enumerate() {
            let p = if i < n_train { Partition::Train } else { Partition::Test };
            rows.push((class, p, w));
        }
    }
    SplitMix64::derive(seed, 0).shuffle(&mut rows);

    let window = cfg.augment.window;
    let mut segments = Vec::with_capacity(rows.len() * window);
    let mut labels = Vec::with_capacity(rows.len());
    let mut partitions = Vec::with_capacity(rows.len());
    for (c, p, w) in rows {
        segments.extend(w.iter().map(|&v| v as f32));
        labels.push(c);
        partitions.push(p);
    }
    Ok(SegmentedDataset {
        window,
        segments,
        labels,
        partitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::RecordMeta;

    fn record(class: ClassLabel, n: usize, seed: u64) -> WaveformRecord {
        let mut rng = SplitMix64::new(seed);
        WaveformRecord::new(
            (0..n).map(|_| rng.normal()).collect(),
            RecordMeta {
                sample_rate: 1000.0,
                rpm: None,
                source_id: format!("{class}-{seed}"),
                class_label: Some(class),
            },
        )
        .unwrap()
    }

    fn cfg(per_class: Option<usize>) -> DatasetConfig {
        DatasetConfig {
            augment: AugmentConfig {
                window: 64,
                offset: 16,
                max_windows: None,
            },
            per_class,
        }
    }

    #[test]
    fn per_class_split_exact() {
        let recs: Vec<_> = [ClassLabel::Ba, ClassLabel::IR, ClassLabel::No, ClassLabel::OR]
            .iter()
            .enumerate()
            .map(|(i, &c)| record(c, 64 + 16 * 59, i as u64))
            .collect();
        let ds = build_dataset(&recs, &cfg(Some(50)), SplitRatio::default(), 1).unwrap();
        assert_eq!(ds.len(), 200);
        for c in ds.classes() {
            assert_eq!(ds.count(Partition::Train, c), 40);
            assert_eq!(ds.count(Partition::Test, c), 10);
        }
        for i in 0..ds.len() {
            let w: Vec<f64> = ds.segment(i).iter().map(|&v| v as f64).collect();
            let (m, s) = super::super::augment::mean_std(&w);
            assert!(m.abs() < 1e-6 && (s - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn insufficient_windows_name_the_class() {
        let recs = vec![record(ClassLabel::OR, 200, 3)];
        let err = build_dataset(&recs, &cfg(Some(50)), SplitRatio::default(), 1).unwrap_err();
        assert!(err.to_string().contains("class OR"), "{err}");
    }

    #[test]
    fn all_train_split() {
        let recs = vec![record(ClassLabel::No, 640, 5)];
        let ds = build_dataset(&recs, &cfg(None), "1:0".parse().unwrap(), 1).unwrap();
        assert!(ds.partitions.iter().all(|&p| p == Partition::Train));
    }

    #[test]
    fn seeds_change_order_not_content() {
        let recs = vec![record(ClassLabel::No, 1000, 5), record(ClassLabel::BM, 1000, 6)];
        let a = build_dataset(&recs, &cfg(None), SplitRatio::default(), 1).unwrap();
        let b = build_dataset(&recs, &cfg(None), SplitRatio::default(), 2).unwrap();
        let key = |d: &SegmentedDataset| {
            let mut v: Vec<Vec<u32>> = (0..d.len()).map(|i| d.segment(i).iter().map(|x| x.to_bits()).collect()).collect();
            v.sort();
            v
        };
        assert_eq!(key(&a), key(&b));
        assert_ne!(a.segments, b.segments);
        assert_ne!(a.partitions, b.partitions);
        let again = build_dataset(&recs, &cfg(None), SplitRatio::default(), 1).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let recs = vec![record(ClassLabel::IR, 400, 1)];
        let ds = build_dataset(&recs, &cfg(None), SplitRatio::default(), 9).unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(SegmentedDataset::from_bytes(&bytes).unwrap(), ds);
        assert!(SegmentedDataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SegmentedDataset::from_bytes(&bad).is_err());
    }
}
