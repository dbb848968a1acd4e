use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use fastwave::cli::{execute, explore_csv, Cli, RunReport, EXPLORE_HEADER};
use fastwave::metrics::MetricReport;
use fastwave::ModelConfig;

fn run(args: &[&str]) -> (i32, String) {
    let cli = Cli::try_parse_from(std::iter::once("fastwave").chain(args.iter().copied())).unwrap();
    let mut out = Vec::new();
    let code = execute(cli.command, &mut out).unwrap();
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_model(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let cfg = dir.join("cfg.json");
    let weights = dir.join("w.bin");
    ModelConfig::new(1, 4, 8).save_json(&cfg).unwrap();
    let (code, _) = run(&["init", "--config", s(&cfg), "--weights", s(&weights), "--seed", "7"]);
    assert_eq!(code, 0);
    (cfg, weights)
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

#[test]
fn generate_writes_a_consistent_wav() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, weights) = tiny_model(dir.path());
    let out = dir.path().join("a.wav");
    let report = dir.path().join("r.json");
    let (code, text) = run(&[
        "generate", "--config", s(&cfg), "--weights", s(&weights), "--samples", "600",
        "--out", s(&out), "--report", s(&report),
    ]);
    assert_eq!(code, 0);
    assert!(text.contains("generated 600 samples"));

    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(bytes.len(), 44 + 2 * 600);
    assert_eq!(&bytes[0..4], b"RIFF");
    assert_eq!(&bytes[8..12], b"WAVE");
    assert_eq!(le_u32(&bytes, 4) as usize, bytes.len() - 8);
    assert_eq!(le_u16(&bytes, 20), 1);
    assert_eq!(le_u16(&bytes, 22), 1);
    assert_eq!(le_u32(&bytes, 24), 16_000);
    assert_eq!(le_u32(&bytes, 28), 32_000);
    assert_eq!(le_u16(&bytes, 32), 2);
    assert_eq!(le_u16(&bytes, 34), 16);
    assert_eq!(le_u32(&bytes, 40), 1200);

    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report.samples_generated, 600);
    assert_eq!(report.number_mode, "real");
    assert!((report.throughput_hz - 600.0 / report.wall_time).abs() <= 1e-9 * report.throughput_hz);
    assert_eq!(report.config_hash.len(), 64);

    let again = dir.path().join("b.wav");
    run(&["generate", "--config", s(&cfg), "--weights", s(&weights), "--samples", "600", "--out", s(&again)]);
    assert_eq!(bytes, std::fs::read(&again).unwrap());

    let (code, text) = run(&["compare", "--a", s(&out), "--b", s(&again)]);
    assert_eq!(code, 0);
    let m: MetricReport = serde_json::from_str(text.trim()).unwrap();
    assert_eq!((m.mse, m.lsd, m.n_samples), (0.0, 0.0, 600));
}

#[test]
fn fixed_mode_and_seed_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, weights) = tiny_model(dir.path());
    let out = dir.path().join("fx.wav");
    let report = dir.path().join("r.json");
    let (code, _) = run(&[
        "generate", "--config", s(&cfg), "--weights", s(&weights), "--samples", "50",
        "--mode", "fixed<27,8>", "--seed-samples", "0.1,-0.2,0.3", "--pout", "2", "--pin", "2",
        "--out", s(&out), "--report", s(&report),
    ]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::metadata(&out).unwrap().len(), 44 + 100);
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report.number_mode, "fixed<27,8>");
}

#[test]
fn spectrogram_export() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, weights) = tiny_model(dir.path());
    let wav = dir.path().join("a.wav");
    run(&["generate", "--config", s(&cfg), "--weights", s(&weights), "--samples", "1000", "--out", s(&wav)]);
    let csv = dir.path().join("spec.csv");
    let (code, _) = run(&["spectrogram", "--input", s(&wav), "--out", s(&csv), "--window-size", "256", "--hop", "64"]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), (1000 - 256) / 64 + 1);
    assert!(text.lines().all(|l| l.split(',').count() == 129));
}

#[test]
fn verify_passes_on_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny_model(dir.path());
    let (code, text) = run(&["verify", "--config", s(&cfg), "--samples", "100"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn explore_reports_the_cost_model() {
    let (code, text) = run(&["explore", "--pout-list", "8", "--pin-list", "4"]);
    assert_eq!(code, 0);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(EXPLORE_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 29);
    let conv = rows.iter().find(|r| r[3] == "128" && r[4] == "128").unwrap();
    assert_eq!(&conv[6..], &["8", "4", "16384", "560", "1024"]);
    let fc = rows.last().unwrap();
    assert_eq!(fc[0], "fc");
    assert_eq!(&fc[3..5], &["256", "128"]);

    let csv = explore_csv(&ModelConfig::default(), &[1, 2], &[1, 2, 4]).unwrap();
    assert_eq!(csv.lines().count(), 1 + 29 * 6);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fastwave");
    let status = |args: &[&str]| Process::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["generate", "--bogus"]), Some(2));
    assert_eq!(status(&["no-such-command"]), Some(2));
    assert_eq!(status(&["explore", "--pin-list", "3"]), Some(1));
    assert_eq!(status(&["compare", "--a", "/nonexistent.wav", "--b", "/nonexistent.wav"]), Some(1));
    assert_eq!(status(&["--help"]), Some(0));
    assert_eq!(status(&["explore", "--pout-list", "8", "--pin-list", "4"]), Some(0));
}
