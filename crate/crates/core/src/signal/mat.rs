//! MATLAB Level-5 MAT-file reader for numeric arrays.
//!
//! Supports uncompressed `miMATRIX` elements and zlib-wrapped `miCOMPRESSED`
//! elements in either byte order. Cell, struct, object, char and sparse
//! arrays are skipped. Every numeric variable comes back flattened to `f64`
//! in column-major order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::ZlibDecoder;

use crate::error::{Error, Result};

const HEADER_LEN: usize = 128;

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

const MX_DOUBLE_CLASS: u32 = 6;
const MX_UINT64_CLASS: u32 = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

pub type MatVariables = BTreeMap<String, Vec<f64>>;

fn err(offset: usize, message: impl Into<String>) -> Error {
    Error::MatParse {
        offset,
        message: message.into(),
    }
}

/// Byte cursor over one buffer. `base` is the absolute file offset of
/// `buf[0]`, or of the enclosing compressed element for inflated buffers.
struct Cursor<'a> {
    buf: &'a [u8],
    endian: Endian,
    base: usize,
    inflated: bool,
}

struct Element<'a> {
    kind: u32,
    data: &'a [u8],
    offset: usize,
    next: usize,
}

impl<'a> Cursor<'a> {
    fn at(&self, pos: usize) -> usize {
        if self.inflated {
            self.base
        } else {
            self.base + pos
        }
    }

    fn fail(&self, pos: usize, message: impl Into<String>) -> Error {
        let message = message.into();
        if self.inflated {
            err(self.base, format!("{message} (at byte {pos} of inflated data)"))
        } else {
            err(self.base + pos, message)
        }
    }

    fn u32_at(&self, pos: usize) -> Result<u32> {
        let b: [u8; 4] = self
            .buf
            .get(pos..pos + 4)
            .ok_or_else(|| self.fail(pos, "truncated element tag"))?
            .try_into()
            .expect("slice of four");
        Ok(match self.endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        })
    }

    /// Reads a tag at `pos`, handling the packed small-element form.
    fn element(&self, pos: usize, pad: bool) -> Result<Element<'a>> {
        if pos + 8 > self.buf.len() {
            return Err(self.fail(pos, "truncated element tag"));
        }
        let first = self.u32_at(pos)?;
        if first >> 16 != 0 {
            let kind = first & 0xffff;
            let n = (first >> 16) as usize;
            if n > 4 {
                return Err(self.fail(pos, format!("small element claims {n} bytes")));
            }
            return Ok(Element {
                kind,
                data: &self.buf[pos + 4..pos + 4 + n],
                offset: pos,
                next: pos + 8,
            });
        }
        let n = self.u32_at(pos + 4)? as usize;
        let start = pos + 8;
        let end = start
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                self.fail(
                    pos,
                    format!(
                        "element declares {n} bytes but only {} remain",
                        self.buf.len() - start
                    ),
                )
            })?;
        let next = if pad { (end + 7) & !7 } else { end };
        Ok(Element {
            kind: first,
            data: &self.buf[start..end],
            offset: pos,
            next: next.min(self.buf.len()),
        })
    }
}

pub fn read_mat_v5(path: impl AsRef<Path>) -> Result<MatVariables> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_mat_v5(&bytes)
}

pub fn parse_mat_v5(bytes: &[u8]) -> Result<MatVariables> {
    if bytes.len() < HEADER_LEN {
        return Err(err(bytes.len(), format!("file is {} bytes, shorter than the 128-byte header", bytes.len())));
    }
    let endian = match &bytes[126..128] {
        b"IM" => Endian::Little,
        b"MI" => Endian::Big,
        other => return Err(err(126, format!("bad endian indicator {other:?}"))),
    };
    let vb = [bytes[124], bytes[125]];
    let version = match endian {
        Endian::Little => u16::from_le_bytes(vb),
        Endian::Big => u16::from_be_bytes(vb),
    };
    if version != 0x0100 {
        return Err(err(124, format!("unsupported MAT version 0x{version:04x}")));
    }

    let top = Cursor {
        buf: bytes,
        endian,
        base: 0,
        inflated: false,
    };
    let mut vars = MatVariables::new();
    let mut pos = HEADER_LEN;
    while pos < bytes.len() {
        let probe = top.element(pos, false)?;
        let el = if probe.kind == MI_COMPRESSED { probe } else { top.element(pos, true)? };
        match el.kind {
            MI_MATRIX => {
                if let Some((name, data)) = parse_matrix(&top, el.data, top.at(el.offset + 8))? {
                    vars.insert(name, data);
                }
            }
            MI_COMPRESSED => {
                let mut inflated = Vec::new();
                ZlibDecoder::new(el.data)
                    .read_to_end(&mut inflated)
                    .map_err(|e| err(el.offset, format!("invalid compressed element: {e}")))?;
                let inner = Cursor {
                    buf: &inflated,
                    endian,
                    base: el.offset,
                    inflated: true,
                };
                let mut ipos = 0;
                while ipos < inflated.len() {
                    let iel = inner.element(ipos, true)?;
                    match iel.kind {
                        MI_MATRIX => {
                            if let Some((name, data)) = parse_matrix(&inner, iel.data, el.offset)? {
                                vars.insert(name, data);
                            }
                        }
                        k => return Err(inner.fail(ipos, format!("unknown element type {k} inside compressed element"))),
                    }
                    ipos = iel.next;
                }
            }
            k => return Err(err(el.offset, format!("unknown element type {k}"))),
        }
        pos = el.next;
    }
    Ok(vars)
}

/// Parses the body of an `miMATRIX` element. Returns `None` for array
/// classes that are not numeric.
fn parse_matrix(outer: &Cursor<'_>, body: &[u8], body_offset: usize) -> Result<Option<(String, Vec<f64>)>> {
    let c = Cursor {
        buf: body,
        endian: outer.endian,
        base: body_offset,
        inflated: outer.inflated,
    };
    let flags = c.element(0, true)?;
    if flags.kind != MI_UINT32 || flags.data.len() < 8 {
        return Err(c.fail(0, "matrix is missing its array-flags subelement"));
    }
    let flag_word = c.u32_at(8)?;
    let class = flag_word & 0xff;
    if c.buf.len() <= flags.next {
        return Err(c.fail(flags.next, "matrix is missing its dimensions"));
    }
    if !(MX_DOUBLE_CLASS..=MX_UINT64_CLASS).contains(&class) {
        return Ok(None);
    }

    let dims_el = c.element(flags.next, true)?;
    if dims_el.kind != MI_INT32 {
        return Err(c.fail(dims_el.offset, format!("dimensions have element type {}", dims_el.kind)));
    }
    let dims: Vec<usize> = decode_numeric(&c, &dims_el)?.into_iter().map(|d| d.max(0.0) as usize).collect();
    if dims.len() > 2 && dims.iter().filter(|&&d| d > 1).count() > 1 {
        return Err(c.fail(dims_el.offset, format!("array of rank {} with dimensions {dims:?} is not a vector", dims.len())));
    }

    let name_el = c.element(dims_el.next, true)?;
    if name_el.kind != MI_INT8 && name_el.kind != MI_UINT8 {
        return Err(c.fail(name_el.offset, format!("array name has element type {}", name_el.kind)));
    }
    let name = String::from_utf8_lossy(name_el.data).into_owned();

    let expected: usize = dims.iter().product();
    if expected == 0 {
        return Ok(Some((name, Vec::new())));
    }
    let real_el = c.element(name_el.next, true)?;
    let real = decode_numeric(&c, &real_el)?;
    if real.len() != expected {
        return Err(c.fail(
            real_el.offset,
            format!("variable {name:?} has {} values, dimensions {dims:?} need {expected}", real.len()),
        ));
    }
    Ok(Some((name, real)))
}

fn decode_numeric(c: &Cursor<'_>, el: &Element<'_>) -> Result<Vec<f64>> {
    let width = match el.kind {
        MI_INT8 | MI_UINT8 => 1,
        MI_INT16 | MI_UINT16 => 2,
        MI_INT32 | MI_UINT32 | MI_SINGLE => 4,
        MI_DOUBLE | MI_INT64 | MI_UINT64 => 8,
        k => return Err(c.fail(el.offset, format!("unknown element type {k} for numeric data"))),
    };
    if el.data.len() % width != 0 {
        return Err(c.fail(el.offset, format!("{} bytes is not a multiple of element width {width}", el.data.len())));
    }
    let le = c.endian == Endian::Little;
    let out = el
        .data
        .chunks_exact(width)
        .map(|b| {
            macro_rules! get {
                ($t:ty) => {{
                    let arr = b.try_into().expect("chunk width");
                    if le {
                        <$t>::from_le_bytes(arr)
                    } else {
                        <$t>::from_be_bytes(arr)
                    }
                }};
            }
            match el.kind {
                MI_INT8 => b[0] as i8 as f64,
                MI_UINT8 => b[0] as f64,
                MI_INT16 => get!(i16) as f64,
                MI_UINT16 => get!(u16) as f64,
                MI_INT32 => get!(i32) as f64,
                MI_UINT32 => get!(u32) as f64,
                MI_SINGLE => get!(f32) as f64,
                MI_DOUBLE => get!(f64),
                MI_INT64 => get!(i64) as f64,
                _ => get!(u64) as f64,
            }
        })
        .collect();
    Ok(out)
}

/// The drive-end accelerometer channel of a CWRU file: the variable whose
/// name ends in `_DE_time`.
pub fn drive_end_signal(vars: &MatVariables) -> Option<(&str, &[f64])> {
    vars.iter()
        .find(|(k, _)| k.ends_with("_DE_time"))
        .map(|(k, v)| (k.as_str(), v.as_slice()))
}

/// Writes column vectors as a minimal Level-5 file: one `miMATRIX` of class
/// double per variable, optionally wrapped in `miCOMPRESSED`.
pub fn write_mat_v5(vars: &[(&str, &[f64])], endian: Endian, compressed: bool) -> Vec<u8> {
    let u32b = |v: u32| match endian {
        Endian::Little => v.to_le_bytes(),
        Endian::Big => v.to_be_bytes(),
    };
    let mut out = Vec::new();
    let mut text = b"MATLAB 5.0 MAT-file, written by bearing-diag".to_vec();
    text.resize(116, b' ');
    out.extend_from_slice(&text);
    out.extend_from_slice(&[0u8; 8]);
    match endian {
        Endian::Little => {
            out.extend_from_slice(&0x0100u16.to_le_bytes());
            out.extend_from_slice(b"IM");
        }
        Endian::Big => {
            out.extend_from_slice(&0x0100u16.to_be_bytes());
            out.extend_from_slice(b"MI");
        }
    }
    for (name, data) in vars {
        let mut body = Vec::new();
        let sub = |kind: u32, payload: &[u8], body: &mut Vec<u8>| {
            body.extend_from_slice(&u32b(kind));
            body.extend_from_slice(&u32b(payload.len() as u32));
            body.extend_from_slice(payload);
            while body.len() % 8 != 0 {
                body.push(0);
            }
        };
        let mut flags = Vec::new();
        flags.extend_from_slice(&u32b(MX_DOUBLE_CLASS));
        flags.extend_from_slice(&u32b(0));
        sub(MI_UINT32, &flags, &mut body);
        let mut dims = Vec::new();
        dims.extend_from_slice(&u32b(data.len() as u32));
        dims.extend_from_slice(&u32b(1));
        sub(MI_INT32, &dims, &mut body);
        sub(MI_INT8, name.as_bytes(), &mut body);
        let payload: Vec<u8> = data
            .iter()
            .flat_map(|v| match endian {
                Endian::Little => v.to_le_bytes(),
                Endian::Big => v.to_be_bytes(),
            })
            .collect();
        sub(MI_DOUBLE, &payload, &mut body);

        let mut element = Vec::new();
        element.extend_from_slice(&u32b(MI_MATRIX));
        element.extend_from_slice(&u32b(body.len() as u32));
        element.extend_from_slice(&body);
        if compressed {
            let mut enc = flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(&element).expect("in-memory write");
            let z = enc.finish().expect("in-memory write");
            out.extend_from_slice(&u32b(MI_COMPRESSED));
            out.extend_from_slice(&u32b(z.len() as u32));
            out.extend_from_slice(&z);
        } else {
            out.extend_from_slice(&element);
        }
    }
    out
}
