//! Command-line front end. Exit status: 0 on success, 1 for usage errors,
//! 2 for data, model and I/O failures.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::arch::{enumerate_first_layer, load_model, save_model, ArchitectureSpec, ModelKind, MSKACNN_WIDTHS};
use crate::error::{Error, Result};
use crate::monitor::{self, Source, StreamConfig, SystemClock};
use crate::signal::manifest::{load_manifest, read_samples, SourceFormat};
use crate::signal::{build_dataset, synth_generate, AugmentConfig, ClassLabel, DatasetConfig, Partition, SegmentedDataset, SplitRatio, SynthConfig};
use crate::train::{
    evaluate, extract_features, feature_layers, results_csv, run_transfer, summarize, summary_csv, train_model, Domain,
    EvalMode, Precision, TrainConfig, TransferTask,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "bearing-diag", version, about = "Bearing fault diagnosis with multi-size-kernel 1D CNNs")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on the train partition of a dataset file.
    Train(TrainArgs),
    /// Accuracy and confusion matrix of a model on a dataset partition.
    Eval(EvalArgs),
    /// Cross-domain transfer runs: train on one domain, test on another.
    Transfer(TransferArgs),
    /// Generate a synthetic dataset file.
    Synth(SynthArgs),
    /// Build a dataset file from a manifest of recordings.
    Dataset(DatasetArgs),
    /// Enumerate admissible first-layer strides and kernel widths.
    Design(DesignArgs),
    /// Classify every window of a recording and print JSON lines.
    Diagnose(DiagnoseArgs),
    /// Classify a live little-endian f32 sample stream and print JSON lines.
    Monitor(MonitorArgs),
    /// Write per-window activations of one layer as CSV.
    ExportFeatures(FeatureArgs),
}

#[derive(Args, Debug)]
struct Seed {
    /// Master seed.
    #[arg(long, env = "BEARING_DIAG_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct Training {
    #[arg(long, default_value_t = 1e-4)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    /// Epochs without improvement before stopping.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    min_delta: f64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    #[command(flatten)]
    seed: Seed,
}

impl Training {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_delta: self.min_delta,
            seed: self.seed.seed,
            precision: self.precision,
        }
    }
}

#[derive(Args, Debug)]
struct Windows {
    /// Samples per window.
    #[arg(long, default_value_t = 4096)]
    window: usize,
    /// Distance between window starts.
    #[arg(long, default_value_t = 1024)]
    offset: usize,
    /// Windows per class drawn before splitting; all when omitted.
    #[arg(long)]
    per_class: Option<usize>,
    /// Train:test ratio within each class.
    #[arg(long, default_value = "4:1")]
    split: String,
}

impl Windows {
    fn build(&self, records: &[crate::signal::WaveformRecord], seed: u64) -> Result<SegmentedDataset> {
        let cfg = DatasetConfig {
            augment: AugmentConfig {
                window: self.window,
                offset: self.offset,
                max_windows: None,
            },
            per_class: self.per_class,
        };
        build_dataset(records, &cfg, self.split.parse::<SplitRatio>()?, seed)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Output model file.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Mskacnn)]
    model: ModelKind,
    /// JSON architecture descriptor used instead of `--model`.
    #[arg(long)]
    arch: Option<PathBuf>,
    #[command(flatten)]
    training: Training,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Partition::Test)]
    partition: Partition,
    #[arg(long, value_enum, default_value_t = EvalMode::Adbn)]
    mode: EvalMode,
}

#[derive(Args, Debug)]
struct TransferArgs {
    /// Domain as ID=DATASET_FILE; repeat for each domain.
    #[arg(long = "domain", required = true)]
    domains: Vec<String>,
    /// Task as SOURCE:TARGET; defaults to every ordered pair of domains.
    #[arg(long = "task")]
    tasks: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mskacnn,wdcnn,dnn")]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Per-run results CSV.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Mean and standard deviation per task and model.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    training: Training,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of classes, taken in label-code order.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(2..=5))]
    classes: u8,
    #[arg(long, short, default_value = "synth.mskads")]
    out: PathBuf,
    /// Records per class.
    #[arg(long, default_value_t = 4)]
    records: usize,
    /// Seconds per record.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    #[arg(long, default_value_t = 1500.0)]
    rpm: f64,
    #[arg(long, default_value_t = 48_128.0)]
    sample_rate: f64,
    /// Standard deviation of additive noise after unit-RMS scaling.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[command(flatten)]
    windows: Windows,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    windows: Windows,
    #[command(flatten)]
    seed: Seed,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Input length L.
    #[arg(long, default_value_t = 4096)]
    length: usize,
    /// Samples per revolution N.
    #[arg(long)]
    period: usize,
    /// Convolution and pooling blocks.
    #[arg(long, default_value_t = 6)]
    layers: usize,
    /// Candidate first-layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = MSKACNN_WIDTHS.to_vec())]
    widths: Vec<usize>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct Streaming {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 4096)]
    window: usize,
    #[arg(long, default_value_t = 4096)]
    hop: usize,
    /// Accumulate batch-norm statistics over the first k windows instead of
    /// using the stored ones.
    #[arg(long, default_value_t = 0)]
    adbn_warmup: usize,
}

impl Streaming {
    fn config(&self) -> StreamConfig {
        StreamConfig {
            window: self.window,
            hop: self.hop,
            adbn_warmup: self.adbn_warmup,
        }
    }
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Recording to classify.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = SourceFormat::Raw)]
    format: SourceFormat,
    /// MAT variable name; defaults to the drive-end channel.
    #[arg(long)]
    variable: Option<String>,
    #[command(flatten)]
    stream: Streaming,
}

#[derive(Args, Debug)]
struct MonitorArgs {
    /// `-` for stdin, `tcp:HOST:PORT`, or a file path.
    #[arg(long, default_value = "-")]
    source: String,
    #[command(flatten)]
    stream: Streaming,
}

#[derive(Args, Debug)]
struct FeatureArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Layer index; must be a pooling or dense layer.
    #[arg(long)]
    layer: usize,
    #[arg(long, value_enum, default_value_t = Partition::Test)]
    partition: Partition,
    #[arg(long, value_enum, default_value_t = EvalMode::Adbn)]
    mode: EvalMode,
    /// Output CSV; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::Train(a) => cmd_train(a, &mut out),
        Command::Eval(a) => cmd_eval(a, &mut out),
        Command::Transfer(a) => cmd_transfer(a, &mut out),
        Command::Synth(a) => cmd_synth(a, &mut out),
        Command::Dataset(a) => cmd_dataset(a, &mut out),
        Command::Design(a) => cmd_design(a, &mut out),
        Command::Diagnose(a) => cmd_diagnose(a, &mut out),
        Command::Monitor(a) => cmd_monitor(a, &mut out),
        Command::ExportFeatures(a) => cmd_features(a, &mut out),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::io("writing output", e))
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let ds = SegmentedDataset::load(&a.data)?;
    let train = ds.partition(Partition::Train);
    if train.is_empty() {
        return Err(Error::Dataset("the train partition is empty".into()));
    }
    let spec = match &a.arch {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
            let spec: ArchitectureSpec = serde_json::from_str(&text).map_err(|e| Error::Model(format!("{}: {e}", p.display())))?;
            spec.validate()?;
            spec
        }
        None => a.model.build(train.window, train.num_classes().max(2))?,
    };
    let cfg = a.training.config();
    let (net, report) = train_model(&spec, &train, &cfg, |s| {
        eprintln!("epoch {:>4}  loss {:.6}  accuracy {:.4}", s.epoch, s.loss, s.accuracy);
    })?;
    save_model(&net, &a.out)?;
    let last = report.epochs.last();
    emit(
        out,
        format_args!(
            "{}: {} parameters, {} epochs ({:?}), final loss {:.6}, train accuracy {:.4}, {:.1} s\nsaved {}\n",
            spec.name,
            net.parameter_count(),
            report.final_epoch,
            report.stop_reason,
            last.map_or(f64::NAN, |s| s.loss),
            last.map_or(f64::NAN, |s| s.accuracy),
            report.seconds,
            a.out.display()
        ),
    )
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_model(&a.model)?;
    let ds = SegmentedDataset::load(&a.data)?;
    let data = ds.partition(a.partition);
    let (acc, cm) = evaluate(&net, &data, a.mode)?;
    emit(out, format_args!("accuracy {:.4} ({}/{})\n", acc, cm.correct(), cm.total()))?;
    let names: Vec<String> = (0..cm.counts.len())
        .map(|c| ClassLabel::from_code(c).map_or(c.to_string(), |l| l.name().to_owned()))
        .collect();
    emit(out, format_args!("{:>6}", "true"))?;
    for n in &names {
        emit(out, format_args!("{n:>7}"))?;
    }
    emit(out, format_args!("\n"))?;
    for (n, row) in names.iter().zip(&cm.counts) {
        emit(out, format_args!("{n:>6}"))?;
        for v in row {
            emit(out, format_args!("{v:>7}"))?;
        }
        emit(out, format_args!("\n"))?;
    }
    Ok(())
}

fn parse_domain(s: &str) -> Result<Domain> {
    let (id, path) = s
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("domain {s:?} is not of the form ID=PATH")))?;
    Ok(Domain::from_dataset(id, &SegmentedDataset::load(path)?))
}

fn cmd_transfer(a: TransferArgs, out: &mut dyn Write) -> Result<()> {
    let domains = a.domains.iter().map(|d| parse_domain(d)).collect::<Result<Vec<_>>>()?;
    let tasks: Vec<TransferTask> = if a.tasks.is_empty() {
        let mut t = Vec::new();
        for s in &domains {
            for d in &domains {
                if s.id != d.id {
                    t.push(TransferTask::new(&s.id, &d.id));
                }
            }
        }
        t
    } else {
        a.tasks.iter().map(|t| t.parse()).collect::<Result<_>>()?
    };
    let records = run_transfer(&tasks, &domains, &a.models, a.repeats, &a.training.config(), |r| {
        eprintln!("{} {} repeat {}: accuracy {:.4} ({:.1} s)", r.task, r.model, r.repeat, r.accuracy, r.seconds);
    })?;
    let cells = summarize(&records);
    if let Some(p) = &a.results {
        write_file(p, results_csv(&records))?;
    }
    if let Some(p) = &a.summary {
        write_file(p, summary_csv(&cells))?;
    }
    for c in &cells {
        emit(
            out,
            format_args!("{:<10} {:<8} {:.2} +/- {:.2} % over {}\n", c.task, c.model, 100.0 * c.mean, 100.0 * c.std, c.repeats),
        )?;
    }
    Ok(())
}

fn describe(ds: &SegmentedDataset, path: &Path, out: &mut dyn Write) -> Result<()> {
    emit(out, format_args!("{}: {} windows of {}\n", path.display(), ds.len(), ds.window))?;
    for c in ds.classes() {
        emit(
            out,
            format_args!(
                "  {:<3} train {:>6}  test {:>6}\n",
                c.name(),
                ds.count(Partition::Train, c),
                ds.count(Partition::Test, c)
            ),
        )?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        sample_rate: a.sample_rate,
        duration: a.duration,
        noise_sigma: a.noise,
        seed: a.seed.seed,
        ..SynthConfig::for_speed(a.rpm)
    };
    let mut records = Vec::new();
    for &class in &ClassLabel::ALL[..a.classes as usize] {
        records.extend(synth_generate(&cfg, class, a.records)?);
    }
    let ds = a.windows.build(&records, a.seed.seed)?;
    ds.save(&a.out)?;
    describe(&ds, &a.out, out)
}

fn cmd_dataset(a: DatasetArgs, out: &mut dyn Write) -> Result<()> {
    let records = load_manifest(&a.manifest)?;
    let ds = a.windows.build(&records, a.seed.seed)?;
    ds.save(&a.out)?;
    describe(&ds, &a.out, out)
}

fn cmd_design(a: DesignArgs, out: &mut dyn Write) -> Result<()> {
    let plans = enumerate_first_layer(a.length, a.period, a.layers, &a.widths)?;
    if a.json {
        return emit(out, format_args!("{}\n", serde_json::to_string_pretty(&plans)?));
    }
    if plans.is_empty() {
        return emit(out, format_args!("no admissible first layer\n"));
    }
    for p in &plans {
        let widths: Vec<String> = p.widths.iter().map(|w| w.to_string()).collect();
        let fields: Vec<String> = p.receptive_fields.iter().map(|r| r.to_string()).collect();
        emit(
            out,
            format_args!("S={} widths {} receptive fields {}\n", p.stride, widths.join("/"), fields.join("/")),
        )?;
    }
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_model(&a.stream.model)?;
    let samples: Vec<f32> = read_samples(&a.input, a.format, a.variable.as_deref())?
        .into_iter()
        .map(|v| v as f32)
        .collect();
    let clock = SystemClock::default();
    let mut out = io::BufWriter::new(out);
    let s = monitor::diagnose_recording(&net, &samples, &a.stream.config(), &clock, &mut out)?;
    out.flush().map_err(|e| Error::io("writing output", e))?;
    eprintln!("{} windows ({} errors), {} samples read, {} samples unconsumed", s.events + s.errors, s.errors, s.samples, s.unconsumed);
    Ok(())
}

fn cmd_monitor(a: MonitorArgs, out: &mut dyn Write) -> Result<()> {
    let source: Source = a.source.parse()?;
    let net = load_model(&a.stream.model)?;
    monitor::check_model(&net, a.stream.window, a.stream.adbn_warmup)?;
    let reader = source.open()?;
    let clock = SystemClock::default();
    let mut out = LineFlush(out);
    monitor::monitor_stream(&net, reader, &a.stream.config(), &clock, &mut out, &mut io::stderr())?;
    Ok(())
}

/// Flushes after every newline so events reach downstream consumers as
/// soon as they are classified.
struct LineFlush<'a>(&'a mut dyn Write);

impl Write for LineFlush<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.0.write(buf)?;
        if buf[..n].contains(&b'\n') {
            self.0.flush()?;
        }
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.0.flush()
    }
}

fn cmd_features(a: FeatureArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_model(&a.model)?;
    let ds = SegmentedDataset::load(&a.data)?;
    let data = ds.partition(a.partition);
    if !feature_layers(&net).contains(&a.layer) {
        return Err(Error::invalid(format!(
            "layer {} is not a pooling or dense layer; choose one of {:?}",
            a.layer,
            feature_layers(&net)
        )));
    }
    let csv = extract_features(&net, &data, a.layer, a.mode)?.to_csv();
    match &a.out {
        Some(p) => write_file(p, csv),
        None => emit(out, format_args!("{csv}")),
    }
}
