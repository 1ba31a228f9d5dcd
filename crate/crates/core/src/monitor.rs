//! Streaming diagnosis over a raw little-endian `f32` sample stream.
//!
//! A reader thread decodes samples, cuts windows every `hop` samples and
//! hands them to the classifier through a channel bounded at four windows.
//! Each window yields one JSON line, in window order:
//!
//! ```text
//! {"window_index":0,"start_sample":0,"posteriors":[...],"label":"IR","latency_ms":1.7}
//! {"window_index":1,"start_sample":4096,"error":"degenerate segment"}
//! ```
//!
//! Verdicts use the model's stored batch-norm statistics unless a warm-up
//! is requested, in which case the first `k` windows are pooled into one
//! batch whose statistics replace them.

use std::io::{self, BufWriter, Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::mpsc::{sync_channel, Receiver};
use std::time::Instant;

use serde::Serialize;

use crate::arch::{Layer, Network, RunMode};
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::signal::{window_starts, zscore_normalize, AugmentConfig, ClassLabel};
use crate::tensor::Tensor;

pub const CHANNEL_WINDOWS: usize = 4;
const READ_CHUNK: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Stdin,
    /// Client connection; the peer closing the connection ends the stream.
    Tcp(String),
    File(PathBuf),
}

/// `-` or `stdin`, `tcp:HOST:PORT`, `file:PATH` or a bare path.
impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "-" | "stdin" => Source::Stdin,
            _ => match s.split_once(':') {
                Some(("tcp", addr)) if !addr.is_empty() => Source::Tcp(addr.to_owned()),
                Some(("tcp", _)) => return Err(Error::invalid("tcp source needs HOST:PORT")),
                Some(("file", p)) => Source::File(p.into()),
                _ => Source::File(s.into()),
            },
        })
    }
}

impl Source {
    pub fn open(&self) -> Result<Box<dyn Read + Send>> {
        Ok(match self {
            Source::Stdin => Box::new(io::stdin()),
            Source::Tcp(addr) => {
                Box::new(TcpStream::connect(addr).map_err(|e| Error::io(format!("connecting to {addr}"), e))?)
            }
            Source::File(p) => {
                Box::new(std::fs::File::open(p).map_err(|e| Error::io(format!("opening {}", p.display()), e))?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamConfig {
    pub window: usize,
    pub hop: usize,
    pub adbn_warmup: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            window: 4096,
            hop: 4096,
            adbn_warmup: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosisEvent {
    pub window_index: usize,
    pub start_sample: u64,
    pub posteriors: Vec<f64>,
    pub label: ClassLabel,
    pub latency_ms: f64,
}

#[derive(Serialize)]
struct ErrorEvent<'a> {
    window_index: usize,
    start_sample: u64,
    error: &'a str,
}

/// Millisecond time source for latency stamps.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

/// Always zero; makes output reproducible byte for byte.
pub struct ZeroClock;

impl Clock for ZeroClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StreamSummary {
    pub samples: u64,
    pub events: usize,
    pub errors: usize,
    /// Samples after the end of the last emitted window.
    pub unconsumed: u64,
    pub trailing_bytes: usize,
}

/// Number of windows a stream of `total` samples produces.
pub fn expected_events(total: u64, window: usize, hop: usize) -> u64 {
    if total < window as u64 {
        0
    } else {
        (total - window as u64) / hop as u64 + 1
    }
}

pub fn check_model(net: &Network<f32>, window: usize, warmup: usize) -> Result<()> {
    if window != net.input_length() {
        return Err(Error::Model(format!(
            "stream window {window} does not match the model input length {}",
            net.input_length()
        )));
    }
    let frozen_missing = net
        .layers
        .iter()
        .any(|l| matches!(l, Layer::BatchNorm(s) if s.batch_count == 0));
    if warmup == 0 && frozen_missing {
        return Err(Error::Model(
            "model has no stored batch-norm statistics; use an adaptation warm-up".into(),
        ));
    }
    Ok(())
}

struct Window {
    index: usize,
    start: u64,
    samples: Vec<f32>,
}

enum Msg {
    Window(Window),
    End { samples: u64, trailing_bytes: usize, consumed_end: u64 },
    Failed(io::Error),
}

fn reader_loop(mut reader: impl Read, window: usize, hop: usize, tx: std::sync::mpsc::SyncSender<Msg>) {
    let mut bytes = vec![0u8; READ_CHUNK];
    let mut carry: Vec<u8> = Vec::with_capacity(3);
    let mut buf: Vec<f32> = Vec::new();
    let mut base: u64 = 0;
    let mut next_start: u64 = 0;
    let mut total: u64 = 0;
    let mut index = 0usize;
    let mut consumed_end = 0u64;
    loop {
        let n = match reader.read(&mut bytes) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => {
                let _ = tx.send(Msg::Failed(e));
                return;
            }
        };
        carry.extend_from_slice(&bytes[..n]);
        let whole = carry.len() / 4 * 4;
        for c in carry[..whole].chunks_exact(4) {
            buf.push(f32::from_le_bytes(c.try_into().expect("four bytes")));
        }
        total += (whole / 4) as u64;
        carry.drain(..whole);
        while base + buf.len() as u64 >= next_start + window as u64 {
            let off = (next_start - base) as usize;
            let w = Window {
                index,
                start: next_start,
                samples: buf[off..off + window].to_vec(),
            };
            consumed_end = next_start + window as u64;
            if tx.send(Msg::Window(w)).is_err() {
                return;
            }
            index += 1;
            next_start += hop as u64;
            let drop = ((next_start - base) as usize).min(buf.len());
            buf.drain(..drop);
            base += drop as u64;
        }
        if next_start > base {
            let drop = ((next_start - base) as usize).min(buf.len());
            buf.drain(..drop);
            base += drop as u64;
        }
    }
    let _ = tx.send(Msg::End {
        samples: total,
        trailing_bytes: carry.len(),
        consumed_end,
    });
}

struct Emitter<'a, W: Write> {
    out: &'a mut W,
    clock: &'a dyn Clock,
    summary: StreamSummary,
}

impl<W: Write> Emitter<'_, W> {
    fn line<S: Serialize>(&mut self, v: &S) -> Result<()> {
        serde_json::to_writer(&mut *self.out, v)?;
        self.out.write_all(b"\n").map_err(|e| Error::io("writing events", e))
    }

    fn degenerate(&mut self, index: usize, start: u64) -> Result<()> {
        self.summary.errors += 1;
        self.line(&ErrorEvent {
            window_index: index,
            start_sample: start,
            error: &Error::DegenerateSegment.to_string(),
        })
    }

    fn verdict(&mut self, index: usize, start: u64, probs: &[f32], started_ms: f64) -> Result<()> {
        let posteriors: Vec<f64> = probs.iter().map(|&p| p as f64).collect();
        let label = ClassLabel::from_code(argmax(&posteriors))?;
        self.summary.events += 1;
        let latency_ms = self.clock.now_ms() - started_ms;
        self.line(&DiagnosisEvent {
            window_index: index,
            start_sample: start,
            posteriors,
            label,
            latency_ms,
        })
    }
}

fn normalized(samples: &[f32]) -> Option<Vec<f32>> {
    let x: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
    zscore_normalize(&x).ok().map(|z| z.iter().map(|&v| v as f32).collect())
}

fn classify_one(net: &Network<f32>, z: Vec<f32>) -> Result<Vec<f32>> {
    let l = z.len();
    let x = Tensor::new(&[1, l, 1], z)?;
    Ok(net.forward(&x, RunMode::Eval, None)?.probs.into_data())
}

/// Warm-up windows pooled into one accumulation batch.
fn adapted(net: &Network<f32>, windows: &[&Vec<f32>]) -> Result<Network<f32>> {
    let mut a = net.clone();
    if windows.is_empty() {
        return Ok(a);
    }
    let l = net.input_length();
    let data: Vec<f32> = windows.iter().flat_map(|w| w.iter().copied()).collect();
    let t = net.forward(&Tensor::new(&[windows.len(), l, 1], data)?, RunMode::Accumulate, None)?;
    a.reset_statistics();
    a.accumulate(&t.bn_stats)?;
    Ok(a)
}

fn drain<W: Write>(
    net: &Network<f32>,
    rx: Receiver<Msg>,
    cfg: &StreamConfig,
    em: &mut Emitter<'_, W>,
) -> Result<(u64, usize, u64)> {
    let mut pending: Vec<(Window, f64, Option<Vec<f32>>)> = Vec::new();
    let mut live: Option<Network<f32>> = (cfg.adbn_warmup == 0).then(|| net.clone());
    let flush = |pending: &mut Vec<(Window, f64, Option<Vec<f32>>)>, em: &mut Emitter<'_, W>| -> Result<Network<f32>> {
        let ok: Vec<&Vec<f32>> = pending.iter().filter_map(|(_, _, z)| z.as_ref()).collect();
        let a = adapted(net, &ok)?;
        for (w, t0, z) in pending.drain(..) {
            match z {
                Some(z) => em.verdict(w.index, w.start, &classify_one(&a, z)?, t0)?,
                None => em.degenerate(w.index, w.start)?,
            }
        }
        Ok(a)
    };
    for msg in rx {
        match msg {
            Msg::Window(w) => {
                let t0 = em.clock.now_ms();
                let z = normalized(&w.samples);
                match &live {
                    Some(n) => match z {
                        Some(z) => em.verdict(w.index, w.start, &classify_one(n, z)?, t0)?,
                        None => em.degenerate(w.index, w.start)?,
                    },
                    None => {
                        pending.push((w, t0, z));
                        if pending.len() == cfg.adbn_warmup {
                            live = Some(flush(&mut pending, em)?);
                        }
                    }
                }
            }
            Msg::End {
                samples,
                trailing_bytes,
                consumed_end,
            } => {
                flush(&mut pending, em)?;
                return Ok((samples, trailing_bytes, samples - consumed_end));
            }
            Msg::Failed(e) => return Err(Error::io("reading stream", e)),
        }
    }
    Err(Error::Dataset("stream reader stopped unexpectedly".into()))
}

/// Classifies every full window of `reader` and writes JSON lines to `out`.
/// Warnings and the end-of-stream summary go to `log`.
pub fn monitor_stream<R: Read + Send, W: Write>(
    net: &Network<f32>,
    reader: R,
    cfg: &StreamConfig,
    clock: &dyn Clock,
    out: &mut W,
    log: &mut dyn Write,
) -> Result<StreamSummary> {
    if cfg.hop == 0 || cfg.window == 0 {
        return Err(Error::invalid("window and hop must be >= 1"));
    }
    check_model(net, cfg.window, cfg.adbn_warmup)?;
    let (tx, rx) = sync_channel(CHANNEL_WINDOWS);
    let mut em = Emitter {
        out,
        clock,
        summary: StreamSummary::default(),
    };
    let (window, hop) = (cfg.window, cfg.hop);
    let result = std::thread::scope(|s| {
        s.spawn(move || reader_loop(reader, window, hop, tx));
        drain(net, rx, cfg, &mut em)
    });
    let (samples, trailing_bytes, unconsumed) = result?;
    em.out.flush().map_err(|e| Error::io("writing events", e))?;
    let mut summary = em.summary;
    summary.samples = samples;
    summary.trailing_bytes = trailing_bytes;
    summary.unconsumed = unconsumed;
    if trailing_bytes > 0 {
        let _ = writeln!(
            log,
            "warning: stream length is not a multiple of 4 bytes; dropped {trailing_bytes} trailing bytes"
        );
    }
    let _ = writeln!(
        log,
        "{} windows ({} errors), {} samples read, {} samples unconsumed",
        summary.events + summary.errors,
        summary.errors,
        samples,
        unconsumed
    );
    Ok(summary)
}

/// Offline equivalent of [`monitor_stream`] over a whole recording, batched
/// 64 windows at a time. Without warm-up its output matches the streaming
/// path byte for byte under the same clock.
pub fn diagnose_recording<W: Write>(
    net: &Network<f32>,
    samples: &[f32],
    cfg: &StreamConfig,
    clock: &dyn Clock,
    out: &mut W,
) -> Result<StreamSummary> {
    check_model(net, cfg.window, cfg.adbn_warmup)?;
    let starts = if samples.len() < cfg.window {
        Vec::new()
    } else {
        window_starts(
            samples.len(),
            &AugmentConfig {
                window: cfg.window,
                offset: cfg.hop,
                max_windows: None,
            },
        )?
    };
    let mut out = BufWriter::new(out);
    let mut em = Emitter {
        out: &mut out,
        clock,
        summary: StreamSummary::default(),
    };
    let windows: Vec<(usize, usize, f64, Option<Vec<f32>>)> = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let t0 = clock.now_ms();
            (i, s, t0, normalized(&samples[s..s + cfg.window]))
        })
        .collect();
    let warm: Vec<&Vec<f32>> = windows
        .iter()
        .take(cfg.adbn_warmup)
        .filter_map(|(_, _, _, z)| z.as_ref())
        .collect();
    let net = if cfg.adbn_warmup > 0 { adapted(net, &warm)? } else { net.clone() };
    let k = net.num_classes();
    for chunk in windows.chunks(crate::train::evaluate::EVAL_BATCH) {
        let good: Vec<&Vec<f32>> = chunk.iter().filter_map(|(_, _, _, z)| z.as_ref()).collect();
        let probs = if good.is_empty() {
            Vec::new()
        } else {
            let data: Vec<f32> = good.iter().flat_map(|z| z.iter().copied()).collect();
            let x = Tensor::new(&[good.len(), cfg.window, 1], data)?;
            net.forward(&x, RunMode::Eval, None)?.probs.into_data()
        };
        let mut rows = probs.chunks_exact(k);
        for (i, s, t0, z) in chunk {
            match z {
                Some(_) => em.verdict(*i, *s as u64, rows.next().expect("one row per good window"), *t0)?,
                None => em.degenerate(*i, *s as u64)?,
            }
        }
    }
    let mut summary = em.summary.clone();
    summary.samples = samples.len() as u64;
    summary.unconsumed = match starts.last() {
        Some(&s) => (samples.len() - s - cfg.window) as u64,
        None => samples.len() as u64,
    };
    out.flush().map_err(|e| Error::io("writing events", e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_parsing() {
        assert_eq!("-".parse::<Source>().unwrap(), Source::Stdin);
        assert_eq!("tcp:127.0.0.1:9000".parse::<Source>().unwrap(), Source::Tcp("127.0.0.1:9000".into()));
        assert_eq!("file:a.bin".parse::<Source>().unwrap(), Source::File("a.bin".into()));
        assert_eq!("a.bin".parse::<Source>().unwrap(), Source::File("a.bin".into()));
        assert!("tcp:".parse::<Source>().is_err());
    }

    #[test]
    fn event_count_formula() {
        assert_eq!(expected_events(8192, 4096, 4096), 2);
        assert_eq!(expected_events(6000, 4096, 4096), 1);
        assert_eq!(expected_events(4095, 4096, 1), 0);
        assert_eq!(expected_events(10, 4, 2), 4);
    }
}
