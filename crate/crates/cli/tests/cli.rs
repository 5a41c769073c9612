use std::path::Path;
use std::process::{Command, Output};

fn skf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skf")).args(args).output().expect("skf runs")
}

fn skf_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skf")).args(args).env(key, value).output().expect("skf runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[geometry]\nnode_spacing = 0.03\nelectrodes = 16\n\n[sweep]\nep_snr_db = [0.0]\npm_snr_db = [0.0]\nnoise_db = [20.0]\nalpha = [0.5, 1.25]\nsmoothing = [true]\nrepetitions = 2\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn oracle_suites_pass() {
    let o = skf(&["oracle"]);
    ok(&o);
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn simulate_writes_signals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = skf(&["--out", out, "simulate", "--noise", "20", "--leadfield"]);
    ok(&o);
    assert!(stdout(&o).contains("1189 nodes, 64 electrodes"));
    for f in ["waveforms.csv", "measurements.csv", "leadfield.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let waves = std::fs::read_to_string(dir.path().join("waveforms.csv")).unwrap();
    assert_eq!(waves.lines().count(), 41);
}

#[test]
fn filter_writes_amplitudes_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = skf(&["--config", &cfg, "--out", out, "filter", "--alpha", "1.25", "--smooth"]);
    ok(&o);
    assert!(stdout(&o).contains("ep0_pm0_noise20_a1.25_smooth"));
    let amps = std::fs::read_to_string(dir.path().join("amplitudes.csv")).unwrap();
    assert!(amps.lines().nth(1).unwrap().contains("smoothed"));
    assert!(dir.path().join("diagnostics.csv").is_file());
}

#[test]
fn sweep_then_replot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("run");
    let o = skf(&["--config", &cfg, "--out", run.to_str().unwrap(), "--jobs", "1", "sweep"]);
    ok(&o);
    assert!(stdout(&o).contains("4 runs, 0 failed"));
    for f in ["results.csv", "summary.csv", "series.csv", "timings.csv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let again = dir.path().join("again");
    let o = skf(&["--out", again.to_str().unwrap(), "plot", "--from", run.to_str().unwrap()]);
    ok(&o);
    let first = std::fs::read_to_string(run.join("plots/run_ep0_pm0_noise20_a0.5_smooth.svg")).unwrap();
    let second = std::fs::read_to_string(again.join("plots/run_ep0_pm0_noise20_a0.5_smooth.svg")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let a = skf_env(&["--out", out, "simulate"], "SKF_SEED", "7");
    let b = skf(&["--out", out, "--seed", "7", "simulate"]);
    let c = skf(&["--out", out, "simulate"]);
    ok(&a);
    let seed_line = |o: &Output| stdout(o).lines().find(|l| l.contains("seed")).unwrap().to_string();
    assert_eq!(seed_line(&a), seed_line(&b));
    assert_ne!(seed_line(&a), seed_line(&c));
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[sweep]\nalpha = [-1.0]\n").unwrap();
    let o = skf(&["--config", path.to_str().unwrap(), "oracle"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.alpha"));
}
