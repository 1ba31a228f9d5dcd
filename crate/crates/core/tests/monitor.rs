use std::io::Write;
use std::net::TcpListener;

use bearing_diag::arch::{build_dnn, build_mskacnn, Network, RunMode};
use bearing_diag::error::Error;
use bearing_diag::monitor::{diagnose_recording, expected_events, monitor_stream, Source, StreamConfig, ZeroClock};
use bearing_diag::rng::SplitMix64;
use proptest::prelude::*;
use serde_json::Value;

fn signal(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|i| ((i as f64 * 0.07).sin() + 0.5 * rng.normal()) as f32).collect()
}

fn bytes(samples: &[f32]) -> Vec<u8> {
    samples.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// MSKACNN with statistics accumulated from a few random windows.
fn cnn() -> Network<f32> {
    let mut net = Network::<f32>::init(&build_mskacnn(4096, 5).unwrap(), 1).unwrap();
    let x = net.batch_from(&signal(4 * 4096, 2)).unwrap();
    let stats = net.forward(&x, RunMode::Accumulate, None).unwrap().bn_stats;
    net.accumulate(&stats).unwrap();
    net
}

fn dnn(window: usize) -> Network<f32> {
    Network::<f32>::init(&build_dnn(window, 5).unwrap(), 3).unwrap()
}

fn cfg(window: usize, hop: usize) -> StreamConfig {
    StreamConfig {
        window,
        hop,
        adbn_warmup: 0,
    }
}

fn run(net: &Network<f32>, samples: &[u8], c: &StreamConfig) -> (String, String) {
    let mut out = Vec::new();
    let mut log = Vec::new();
    monitor_stream(net, samples, c, &ZeroClock, &mut out, &mut log).unwrap();
    (String::from_utf8(out).unwrap(), String::from_utf8(log).unwrap())
}

#[test]
fn two_full_windows_give_two_events() {
    let (out, log) = run(&cnn(), &bytes(&signal(8192, 5)), &StreamConfig::default());
    let events: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 2);
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e["window_index"], i);
        assert_eq!(e["start_sample"], i * 4096);
        let p: Vec<f64> = e["posteriors"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        let names = ["Ba", "IR", "No", "OR", "BM"];
        assert_eq!(e["label"], names[best]);
        let keys: Vec<&str> = e.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 5, "{keys:?}");
    }
    assert!(log.contains("0 samples unconsumed"), "{log}");
}

#[test]
fn partial_tail_is_reported() {
    let (out, log) = run(&cnn(), &bytes(&signal(6000, 6)), &StreamConfig::default());
    assert_eq!(out.lines().count(), 1);
    assert!(log.contains("1904 samples unconsumed"), "{log}");
}

#[test]
fn constant_window_emits_an_error_event_and_continues() {
    let mut s = signal(3 * 64, 7);
    s[64..128].fill(1.5);
    let (out, _) = run(&dnn(64), &bytes(&s), &cfg(64, 64));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], r#"{"window_index":1,"start_sample":64,"error":"degenerate segment"}"#);
    assert!(lines[2].contains("\"window_index\":2"));
}

#[test]
fn trailing_bytes_are_dropped_with_a_warning() {
    let mut b = bytes(&signal(130, 8));
    b.extend_from_slice(&[1, 2, 3]);
    let (out, log) = run(&dnn(64), &b, &cfg(64, 64));
    assert_eq!(out.lines().count(), 2);
    assert!(log.contains("3 trailing bytes"), "{log}");
    assert!(log.contains("130 samples read, 2 samples unconsumed"), "{log}");
}

#[test]
fn stream_matches_batch_inference_byte_for_byte() {
    let net = cnn();
    for hop in [4096, 1500] {
        let c = cfg(4096, hop);
        let n = 4096 + 9 * hop + 77;
        let s = signal(n, 9);
        let (streamed, _) = run(&net, &bytes(&s), &c);
        let mut batch = Vec::new();
        diagnose_recording(&net, &s, &c, &ZeroClock, &mut batch).unwrap();
        assert_eq!(streamed.lines().count(), 10);
        assert_eq!(streamed.as_bytes(), &batch[..]);
    }
}

#[test]
fn window_must_match_the_model() {
    let err = monitor_stream(&dnn(64), &b""[..], &cfg(128, 64), &ZeroClock, &mut Vec::new(), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, Error::Model(_)), "{err}");
}

#[test]
fn missing_statistics_need_a_warmup() {
    let net = Network::<f32>::init(&build_mskacnn(4096, 5).unwrap(), 1).unwrap();
    let s = bytes(&signal(3 * 4096, 10));
    let err = monitor_stream(&net, &s[..], &StreamConfig::default(), &ZeroClock, &mut Vec::new(), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, Error::Model(_)));
    let warm = StreamConfig {
        adbn_warmup: 2,
        ..StreamConfig::default()
    };
    let (out, _) = run(&net, &s, &warm);
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn tcp_source_reads_until_the_peer_closes() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let payload = bytes(&signal(64 * 5 + 10, 11));
    let sender = std::thread::spawn(move || {
        let (mut sock, _) = listener.accept().unwrap();
        for chunk in payload.chunks(37) {
            sock.write_all(chunk).unwrap();
        }
    });
    let source: Source = format!("tcp:{addr}").parse().unwrap();
    let reader = source.open().unwrap();
    let mut out = Vec::new();
    let summary = monitor_stream(&dnn(64), reader, &cfg(64, 64), &ZeroClock, &mut out, &mut Vec::new()).unwrap();
    sender.join().unwrap();
    assert_eq!(summary.events, 5);
    assert_eq!(summary.unconsumed, 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn event_count_formula_holds(total in 0usize..1200, window in prop::sample::select(vec![16usize, 32, 64]), hop in 1usize..80) {
        let net = dnn(window);
        let s = signal(total, total as u64);
        let mut out = Vec::new();
        let summary = monitor_stream(&net, &bytes(&s)[..], &cfg(window, hop), &ZeroClock, &mut out, &mut Vec::new()).unwrap();
        let lines = out.iter().filter(|&&b| b == b'\n').count() as u64;
        prop_assert_eq!(lines, expected_events(total as u64, window, hop));
        prop_assert_eq!(summary.samples, total as u64);
    }
}
