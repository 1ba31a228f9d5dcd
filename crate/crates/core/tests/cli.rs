use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bearing-diag"));
    c.env_remove("BEARING_DIAG_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// Small two-class dataset of 256-sample windows.
fn synth(dir: &Path, name: &str, extra: &[&str]) -> String {
    let out = dir.join(name).display().to_string();
    let mut args = vec![
        "synth", "--classes", "2", "--records", "1", "--duration", "0.5", "--window", "256", "--offset", "256", "-o", &out,
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", text(&o.stderr));
    out
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = run(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("Usage"), "{}", text(&o.stderr));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["design", "--period", "1925", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("Usage"));
}

#[test]
fn design_reproduces_the_stride_choice() {
    let o = run(&["design", "--length", "4096", "--period", "1925", "--layers", "6"]);
    assert!(o.status.success());
    let s = text(&o.stdout);
    assert!(s.starts_with("S=16 widths 32/64/128/256"), "{s}");
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.ds", &["--seed", "7"]);
    let b = synth(dir.path(), "b.ds", &["--seed", "7"]);
    let c = synth(dir.path(), "c.ds", &["--seed", "8"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.ds", &["--seed", "7"]);
    let b = dir.path().join("b.ds");
    let o = bin()
        .env("BEARING_DIAG_SEED", "7")
        .args(["synth", "--classes", "2", "--records", "1", "--duration", "0.5", "--window", "256", "--offset", "256", "-o"])
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn missing_data_file_exits_with_two() {
    let o = run(&["eval", "--model", "/nonexistent/m.bin", "--data", "/nonexistent/d.ds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).starts_with("error:"));
}

#[test]
fn train_eval_diagnose_monitor_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.ds", &["--seed", "1"]);
    let model = dir.path().join("m.bin").display().to_string();
    let o = run(&[
        "train", "--data", &data, "-o", &model, "--model", "dnn", "--max-epochs", "3", "--patience", "3", "--learning-rate", "1e-3",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("epoch    3"));

    let o = run(&["eval", "--model", &model, "--data", &data, "--mode", "frozen"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).starts_with("accuracy "));

    let o = run(&["export-features", "--model", &model, "--data", &data, "--layer", "1"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = text(&o.stdout);
    assert!(csv.starts_with("label,f0,"));
    let o = run(&["export-features", "--model", &model, "--data", &data, "--layer", "0"]);
    assert_eq!(o.status.code(), Some(1));

    // the same raw recording through the offline and streaming paths
    let raw = dir.path().join("rec.f32");
    let samples: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.37).sin() + (i % 7) as f32 * 0.1).collect();
    let payload: Vec<u8> = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&raw, &payload).unwrap();
    let o = run(&["diagnose", "--model", &model, "--input", raw.to_str().unwrap(), "--window", "256", "--hop", "256"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).lines().count(), 3);
    assert!(text(&o.stderr).contains("232 samples unconsumed"));

    let mut child = bin()
        .args(["monitor", "--model", &model, "--window", "256", "--hop", "256"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&payload).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).lines().count(), 3);
    assert!(text(&o.stderr).contains("3 windows (0 errors), 1000 samples read, 232 samples unconsumed"));

    let o = run(&["monitor", "--model", &model, "--window", "512", "--source", raw.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("does not match"));
}

#[test]
fn transfer_writes_result_tables() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth(dir.path(), "x.ds", &["--seed", "1"]);
    let y = synth(dir.path(), "y.ds", &["--seed", "2", "--rpm", "1575", "--noise", "0.3"]);
    let results = dir.path().join("r.csv");
    let summary = dir.path().join("s.csv");
    let o = run(&[
        "transfer",
        "--domain",
        &format!("X={x}"),
        "--domain",
        &format!("Y={y}"),
        "--models",
        "dnn",
        "--repeats",
        "2",
        "--max-epochs",
        "2",
        "--patience",
        "2",
        "--results",
        results.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let r = std::fs::read_to_string(results).unwrap();
    assert_eq!(r.lines().next().unwrap(), "task,model,repeat,accuracy,seconds");
    assert_eq!(r.lines().count(), 1 + 2 * 2);
    assert!(r.contains("X->Y,DNN,1,"));
    assert_eq!(std::fs::read_to_string(summary).unwrap().lines().count(), 3);
}

#[test]
fn dataset_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let wave = |f: f64| -> String { (0..2000).map(|i| format!("{}\n", (i as f64 * f).sin())).collect() };
    std::fs::write(dir.path().join("n.csv"), wave(0.01)).unwrap();
    std::fs::write(dir.path().join("f.csv"), wave(0.2)).unwrap();
    let manifest = r#"[
        {"path": "n.csv", "format": "csv", "class_label": "No", "sample_rate": 48000},
        {"path": "f.csv", "format": "csv", "class_label": "IR", "rpm": 1797, "sample_rate": 48000}
    ]"#;
    let m = dir.path().join("m.json");
    std::fs::write(&m, manifest).unwrap();
    let out = dir.path().join("d.ds");
    let o = run(&["dataset", "--manifest", m.to_str().unwrap(), "-o", out.to_str().unwrap(), "--window", "256", "--offset", "128"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let s = text(&o.stdout);
    assert!(s.contains("28 windows of 256"), "{s}");
}
