use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rismask_core::io::{key_from_toml, result_from_toml};
use tempfile::TempDir;

const GESTURE: &str = include_str!("../../../scenarios/default.toml");
const RESPIRATION: &str = include_str!("../../../scenarios/respiration.toml");

fn rismask(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rismask")).args(args).current_dir(dir).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", stderr(out));
    if code != 0 {
        assert_eq!(stderr(out).trim_end().lines().count(), 1, "stderr: {}", stderr(out));
    }
}

/// The gesture scenario cut to `seconds`, written as `name` in `dir`.
fn short_gesture(dir: &Path, name: &str, seconds: f64) -> PathBuf {
    let text = GESTURE.replace("duration = 10.0", &format!("duration = {seconds}"));
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn simulate_short(dir: &Path) -> PathBuf {
    short_gesture(dir, "scenario.toml", 3.0);
    assert_exit(&rismask(&["simulate", "--config", "scenario.toml", "--out", "sim"], dir), 0);
    dir.join("sim")
}

#[test]
fn help_lists_every_flag() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, &[&str]); 6] = [
        ("optimize", &["--config", "--out", "--seed", "--onebit"]),
        ("beampattern", &["--config", "--out", "--result", "--row", "--angles"]),
        ("schedule", &["--config", "--out", "--seed", "--key", "--duration"]),
        ("simulate", &["--config", "--out", "--seed"]),
        ("demask", &["--config", "--out", "--trace", "--key", "--coherence-gap", "--guard", "--cutoff", "--cv-window", "--permissive"]),
        ("metrics", &["--config", "--out", "--trace", "--truth", "--attacker", "--result"]),
    ];
    let top = String::from_utf8(rismask(&["--help"], dir.path()).stdout).unwrap();
    for (cmd, flags) in cases {
        assert!(top.contains(cmd), "{top}");
        let out = rismask(&[cmd, "--help"], dir.path());
        assert_exit(&out, 0);
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}:\n{text}");
        }
    }
}

#[test]
fn optimize_writes_result_trace_and_manifest() {
    let dir = TempDir::new().unwrap();
    assert_exit(&rismask(&["optimize", "--out", "plain"], dir.path()), 0);
    let result = result_from_toml(&fs::read_to_string(dir.path().join("plain/result.toml")).unwrap()).unwrap();
    let trace = fs::read_to_string(dir.path().join("plain/objective_trace.csv")).unwrap();
    let values: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(trace.starts_with("iteration,objective\n"));
    assert_eq!(values.len(), result.objective_trace.len());
    assert!(values.windows(2).all(|w| w[1] >= w[0]));
    let manifest = fs::read_to_string(dir.path().join("plain/manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"optimize\"") && manifest.contains("result.toml"));

    assert_exit(&rismask(&["optimize", "--onebit", "--out", "binary"], dir.path()), 0);
    let result = result_from_toml(&fs::read_to_string(dir.path().join("binary/result.toml")).unwrap()).unwrap();
    for pair in &result.pairs {
        for z in pair.phi1.iter().chain(&pair.phi2) {
            assert!(z.im == 0.0 && z.re.abs() == 1.0, "{z}");
        }
    }
}

#[test]
fn malformed_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("typo.toml"), "[optimizer]\nomgea2 = 1.0\n").unwrap();
    fs::write(dir.path().join("type.toml"), "[sim]\nsnr_db = \"loud\"\n").unwrap();
    for (file, field) in [("typo.toml", "omgea2"), ("type.toml", "snr_db")] {
        let out = rismask(&["optimize", "--config", file, "--out", "o"], dir.path());
        assert_exit(&out, 1);
        assert!(stderr(&out).contains(field), "{}", stderr(&out));
    }
    let out = rismask(&["optimize", "--config", "absent.toml"], dir.path());
    assert_exit(&out, 1);
}

#[test]
fn beampattern_and_schedule_emit_csv() {
    let dir = TempDir::new().unwrap();
    assert_exit(&rismask(&["optimize", "--out", "opt"], dir.path()), 0);
    let out = rismask(&["beampattern", "--result", "opt/result.toml", "--row", "2", "--angles", "-20,50", "--out", "bp"], dir.path());
    assert_exit(&out, 0);
    let csv = fs::read_to_string(dir.path().join("bp/beampattern.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "angle_deg,mag1,mag2,phase_diff");
    assert_eq!(lines.len(), 3);
    let phase: f64 = lines[2].split(',').nth(3).unwrap().parse().unwrap();
    assert!(phase.abs() > 2.5, "sensing-direction phase difference {phase}");
    assert_exit(&rismask(&["beampattern", "--result", "opt/result.toml", "--angles", "0:10:5"], dir.path()), 0);
    assert_exit(&rismask(&["beampattern", "--result", "opt/result.toml", "--angles", "ten"], dir.path()), 1);
    assert_exit(&rismask(&["beampattern", "--result", "opt/result.toml", "--row", "99"], dir.path()), 1);

    assert_exit(&rismask(&["schedule", "--seed", "5", "--duration", "1.0", "--out", "sched"], dir.path()), 0);
    let key = key_from_toml(&fs::read_to_string(dir.path().join("sched/key.toml")).unwrap()).unwrap();
    assert_eq!(key.seed, 5);
    let csv = fs::read_to_string(dir.path().join("sched/schedule.csv")).unwrap();
    assert!(csv.starts_with("slot,start,config_index,is_sync,selection\n"));
    assert_eq!(csv.lines().count(), 1 + 500);
    assert_exit(&rismask(&["schedule", "--key", "sched/key.toml", "--duration", "1.0", "--out", "again"], dir.path()), 0);
    assert_eq!(fs::read(dir.path().join("again/schedule.csv")).unwrap(), csv.into_bytes());
}

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let dir = TempDir::new().unwrap();
    short_gesture(dir.path(), "scenario.toml", 2.0);
    for out in ["a", "b"] {
        assert_exit(&rismask(&["simulate", "--config", "scenario.toml", "--seed", "3", "--out", out], dir.path()), 0);
    }
    let names = ["key.toml", "legit_trace.csv", "attacker_trace.csv", "truth.csv", "snr_series.csv", "report.toml", "manifest.toml"];
    for name in names {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(!a.is_empty() && a == b, "{name} differs");
    }
    let manifest = fs::read_to_string(dir.path().join("a/manifest.toml")).unwrap();
    assert!(manifest.contains("[\"sim\", 3]"), "{manifest}");
}

#[test]
fn missing_pairs_file_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("s.toml"), format!("pairs = \"nowhere/result.toml\"\n{GESTURE}")).unwrap();
    let out = rismask(&["simulate", "--config", "s.toml"], dir.path());
    assert_exit(&out, 1);
    assert!(stderr(&out).contains("result.toml"));
}

#[test]
fn simulate_accepts_pairs_and_key_files() {
    let dir = TempDir::new().unwrap();
    let sim = simulate_short(dir.path());
    assert_exit(&rismask(&["optimize", "--config", "scenario.toml", "--out", "opt"], dir.path()), 0);
    let text = fs::read_to_string(dir.path().join("scenario.toml")).unwrap();
    let text = text.replace("[key]\n", "[key]\nfile = \"sim/key.toml\"\n");
    fs::write(dir.path().join("files.toml"), format!("pairs = \"opt/result.toml\"\n{text}")).unwrap();
    assert_exit(&rismask(&["simulate", "--config", "files.toml", "--out", "again"], dir.path()), 0);
    let a = fs::read(sim.join("legit_trace.csv")).unwrap();
    let b = fs::read(dir.path().join("again/legit_trace.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn demask_and_metrics_on_simulated_trace() {
    let dir = TempDir::new().unwrap();
    let sim = simulate_short(dir.path());
    let trace = sim.join("legit_trace.csv");
    let key = sim.join("key.toml");
    let out = rismask(
        &["demask", "--trace", trace.to_str().unwrap(), "--key", key.to_str().unwrap(), "--cutoff", "10", "--coherence-gap", "0.005", "--out", "clean"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let diag: toml::Table = toml::from_str(&fs::read_to_string(dir.path().join("clean/diagnostics.toml")).unwrap()).unwrap();
    let residual = diag["sync_residual"].as_float().unwrap();
    assert!(residual < 5e-4, "sync residual {residual}");
    assert!(fs::read_to_string(dir.path().join("clean/cleaned.csv")).unwrap().starts_with("timestamp_ns,antenna,subcarrier,real,imag\n"));

    let out = rismask(&["metrics", "--trace", "clean/cleaned.csv", "--truth", "sim/truth.csv", "--result", "sim/../sim/key.toml", "--out", "m"], dir.path());
    assert_exit(&out, 1);
    assert_exit(&rismask(&["metrics", "--trace", "clean/cleaned.csv", "--truth", "sim/truth.csv", "--out", "m"], dir.path()), 0);
    let m: toml::Table = toml::from_str(&fs::read_to_string(dir.path().join("m/metrics.toml")).unwrap()).unwrap();
    assert!(m["correlation"].as_float().unwrap() >= 0.9, "{m}");
}

#[test]
fn wrong_format_key_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let sim = simulate_short(dir.path());
    fs::write(dir.path().join("key.toml"), "seed = 1\ncandidates = [\"01x\"]\n").unwrap();
    let out = rismask(&["demask", "--trace", sim.join("legit_trace.csv").to_str().unwrap(), "--key", "key.toml"], dir.path());
    assert_exit(&out, 1);
}

#[test]
fn short_trace_fails_at_sync_with_exit_2() {
    let dir = TempDir::new().unwrap();
    let sim = simulate_short(dir.path());
    let full = fs::read_to_string(sim.join("legit_trace.csv")).unwrap();
    let short: String = full
        .lines()
        .enumerate()
        .filter(|(i, l)| *i == 0 || l.split(',').next().unwrap().parse::<i64>().unwrap() < 800_000_000)
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    fs::write(dir.path().join("short.csv"), short).unwrap();
    let out = rismask(&["demask", "--trace", "short.csv", "--key", "sim/key.toml"], dir.path());
    assert_exit(&out, 2);
    assert!(stderr(&out).contains("detect_sync"), "{}", stderr(&out));
}

#[test]
fn respiration_report_recovers_the_breathing_rate() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("resp.toml"), RESPIRATION).unwrap();
    assert_exit(&rismask(&["simulate", "--config", "resp.toml", "--out", "resp"], dir.path()), 0);
    let report: toml::Table = toml::from_str(&fs::read_to_string(dir.path().join("resp/report.toml")).unwrap()).unwrap();
    let f = report["legit_peak"]["frequency"].as_float().unwrap();
    assert!((f - 0.25).abs() <= 0.02, "legit peak at {f} Hz");
}
