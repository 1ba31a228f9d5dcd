//! JSON dataset manifests.
//!
//! ```json
//! {"records": [
//!   {"path": "97.mat", "format": "mat", "class_label": "No", "rpm": 1797, "sample_rate": 48000}
//! ]}
//! ```
//!
//! A bare top-level array of records is accepted too. Relative paths resolve
//! against the manifest's directory. For MAT files `variable` picks a
//! variable by name; otherwise the `_DE_time` channel is used.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::io::{parse_csv, parse_raw_f32};
use super::mat::{drive_end_signal, read_mat_v5};
use super::{ClassLabel, RecordMeta, WaveformRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Mat,
    Csv,
    /// Little-endian f32.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub format: SourceFormat,
    pub class_label: ClassLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpm: Option<f64>,
    pub sample_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestRepr {
    List(Vec<ManifestEntry>),
    Wrapped { records: Vec<ManifestEntry> },
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let repr: ManifestRepr = serde_json::from_str(text)
        .map_err(|e| Error::Dataset(format!("invalid manifest: {e}")))?;
    let entries = match repr {
        ManifestRepr::List(v) | ManifestRepr::Wrapped { records: v } => v,
    };
    if entries.is_empty() {
        return Err(Error::Dataset("manifest lists no records".into()));
    }
    Ok(entries)
}

/// Samples of one file. MAT files use `variable` when given, otherwise the
/// drive-end channel.
pub fn read_samples(path: &Path, format: SourceFormat, variable: Option<&str>) -> Result<Vec<f64>> {
    let read = || std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e));
    match format {
        SourceFormat::Csv => {
            let bytes = read()?;
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Dataset(format!("{}: not UTF-8 text", path.display())))?;
            parse_csv(&text, path)
        }
        SourceFormat::Raw => parse_raw_f32(&read()?, path),
        SourceFormat::Mat => {
            let vars = read_mat_v5(path)?;
            match variable {
                Some(name) => vars
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::Dataset(format!("{}: no variable {name:?}", path.display()))),
                None => drive_end_signal(&vars)
                    .map(|(_, v)| v.to_vec())
                    .ok_or_else(|| Error::Dataset(format!("{}: no *_DE_time variable", path.display()))),
            }
        }
    }
}

pub fn load_entry(entry: &ManifestEntry, base: &Path) -> Result<WaveformRecord> {
    let path = if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        base.join(&entry.path)
    };
    let meta = RecordMeta {
        sample_rate: entry.sample_rate,
        rpm: entry.rpm,
        source_id: entry.path.display().to_string(),
        class_label: Some(entry.class_label),
    };
    WaveformRecord::new(read_samples(&path, entry.format, entry.variable.as_deref())?, meta)
}

/// Reads the manifest at `path` and every record it lists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<WaveformRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text)?.iter().map(|e| load_entry(e, base)).collect()
}
