//! Plain-text and raw binary waveform readers.

use std::path::Path;

use crate::error::{Error, Result};

use super::{RecordMeta, WaveformRecord};

/// One real per line. A first line that does not parse is taken as a
/// header; blank lines are ignored.
pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => {
                return Err(Error::Text {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("non-finite value {field:?}"),
                })
            }
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Text {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("cannot parse {field:?} as a number"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Dataset(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

/// Little-endian IEEE-754 single precision values.
pub fn parse_raw_f32(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if bytes.is_empty() {
        return Err(Error::Dataset(format!("{}: no samples", path.display())));
    }
    if bytes.len() % 4 != 0 {
        return Err(Error::Dataset(format!(
            "{}: {} bytes is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("four bytes")) as f64)
        .collect())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

pub fn read_csv(path: impl AsRef<Path>, meta: RecordMeta) -> Result<WaveformRecord> {
    let path = path.as_ref();
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::Dataset(format!("{}: not UTF-8 text", path.display())))?;
    WaveformRecord::new(parse_csv(&text, path)?, meta)
}

pub fn read_raw_f32(path: impl AsRef<Path>, meta: RecordMeta) -> Result<WaveformRecord> {
    let path = path.as_ref();
    WaveformRecord::new(parse_raw_f32(&read_bytes(path)?, path)?, meta)
}

pub fn encode_raw_f32(samples: &[f64]) -> Vec<u8> {
    samples.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect()
}
