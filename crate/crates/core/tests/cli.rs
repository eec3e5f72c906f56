use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ladder_phase::interferometer::trace_io::{read_trace, write_csv};
use ladder_phase::interferometer::DetectorTrace;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ladder-phase"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[i].to_string()).collect()
}

fn with_edit(src: &str, from: &str, to: &str, dir: &Path, name: &str) -> PathBuf {
    let text = fs::read_to_string(config(src)).unwrap();
    assert!(text.contains(from), "{from} not in {src}");
    let p = dir.join(name);
    fs::write(&p, text.replacen(from, to, 1)).unwrap();
    p
}

#[test]
fn missing_key_names_it_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_edit("golden_cw.toml", "temperature_c = 97.6\n", "", dir.path(), "c.toml");
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("temperature_c"), "{}", stderr(&o));
}

#[test]
fn config_and_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_edit(
        "golden_cw.toml",
        "[cell]\n",
        "[cell]\ncolour = 3\n",
        dir.path(),
        "c.toml",
    );
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let o = run_in(dir.path(), &["--config", "nowhere.toml", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));

    let cw = config("golden_cw.toml");
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cw.to_str().unwrap(),
            "sweep",
            "--axis",
            "cell.colour",
            "--values",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(
        dir.path(),
        &["--config", cw.to_str().unwrap(), "spectrum", "--points", "10"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn truncated_binary_header_exits_4_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("short.bin");
    fs::write(&bin, b"LDPH\x01\x00\x00\x00").unwrap();
    let cfg = config("golden_cw.toml");
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "analyze",
            "--trace",
            bin.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("at byte 8"), "{}", stderr(&o));

    let missing = dir.path().join("absent.csv");
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "analyze",
            "--trace",
            missing.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn analyze_reproduces_simulate_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("golden_cw.toml");
    let cfg = cfg.to_str().unwrap();
    let o = run_in(dir.path(), &["--config", cfg, "simulate", "--out-dir", "sim"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sim = dir.path().join("out/cw/sim");
    let want = fs::read(sim.join("results.csv")).unwrap();
    for trace in ["trace.bin", "trace.csv"] {
        let t = sim.join(trace);
        let o = run_in(
            dir.path(),
            &[
                "--config",
                cfg,
                "analyze",
                "--trace",
                t.to_str().unwrap(),
                "--out",
                "again.csv",
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(fs::read(dir.path().join("out/cw/again.csv")).unwrap(), want, "{trace}");
        assert!(dir.path().join("out/cw/again.json").exists());
    }
}

#[test]
fn pulsed_golden_recovers_injected_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("golden_pulsed.toml");
    let cfg = cfg.to_str().unwrap();
    let o = run_in(dir.path(), &["--config", cfg, "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out/pulsed");
    let got: f64 = column(&out.join("results.csv"), "dphi_over_pi")[0].parse().unwrap();
    assert!((got - 0.53).abs() < 1e-6, "{got}");
    let t: f64 = column(&out.join("results.csv"), "transmission")[0].parse().unwrap();
    assert!((t - 0.84).abs() < 1e-6, "{t}");

    // stored traces give the same answer; without a calibration trace it is a config error
    let trace = out.join("trace.bin");
    let cal = out.join("calibration_trace.bin");
    let want = fs::read(out.join("results.csv")).unwrap();
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg,
            "analyze",
            "--trace",
            trace.to_str().unwrap(),
            "--calibration",
            cal.to_str().unwrap(),
            "--out",
            "again.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(out.join("again.csv")).unwrap(), want);
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg,
            "analyze",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sum_rule_violations_are_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("golden_cw.toml");
    let cfg = cfg.to_str().unwrap();
    let o = run_in(dir.path(), &["--config", cfg, "simulate", "--out-dir", "sim"]);
    assert_eq!(o.status.code(), Some(0));
    // a detector gain drop while the control is on: V1 + V2 falls below 2a T_off
    let t = read_trace(&dir.path().join("out/cw/sim/trace.csv")).unwrap();
    let gain = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&t.control)
            .map(|(x, c)| if *c > 0.5 { 0.3 * x } else { *x })
            .collect()
    };
    let bad = DetectorTrace::new(t.times.clone(), gain(&t.v1), gain(&t.v2), t.control.clone()).unwrap();
    let path = dir.path().join("bad.csv");
    write_csv(&bad, &path).unwrap();
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg,
            "analyze",
            "--trace",
            path.to_str().unwrap(),
            "--out",
            "bad_results.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let flags = column(&dir.path().join("out/cw/bad_results.csv"), "flags");
    assert_eq!(flags.len(), 20);
    let hits = flags.iter().filter(|f| f.contains("sum_rule")).count();
    assert!(hits >= 10, "{flags:?}");
    let clean = column(&dir.path().join("out/cw/sim/results.csv"), "flags");
    assert!(clean.iter().all(|f| !f.contains("sum_rule")));
}

#[test]
fn spectrum_with_identical_configs_has_zero_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_edit(
        "golden_spectrum.toml",
        "control_rabi_ghz = 2.0",
        "control_rabi_ghz = 0.0",
        dir.path(),
        "s.toml",
    );
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "spectrum",
            "--delta-s-start",
            "-3",
            "--delta-s-stop",
            "1",
            "--points",
            "41",
            "--out",
            "flat.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out/spectrum");
    let dphi = column(&out.join("flat.csv"), "dphi_rad");
    assert_eq!(dphi.len(), 41);
    assert!(dphi.iter().all(|x| x.parse::<f64>().unwrap() == 0.0), "{dphi:?}");
    let roi: serde_json::Value = serde_json::from_slice(&fs::read(out.join("roi.json")).unwrap()).unwrap();
    assert_eq!(roi.as_array().unwrap().len(), 0);
}

#[test]
fn golden_spectrum_has_operating_window() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("golden_spectrum.toml");
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "spectrum"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("out/spectrum");
    assert_eq!(csv_rows(&out.join("spectrum.csv")).len(), 801);
    let roi: serde_json::Value = serde_json::from_slice(&fs::read(out.join("roi.json")).unwrap()).unwrap();
    let w = &roi.as_array().unwrap()[0];
    let (a, b) = (
        w["delta_s_start_ghz"].as_f64().unwrap(),
        w["delta_s_stop_ghz"].as_f64().unwrap(),
    );
    assert!(a >= -4.8 && b <= -2.0 && a < b, "{w}");
    assert!(w["min_t_on"].as_f64().unwrap() >= 0.9);
    assert!(w["mean_dphi_rad"].as_f64().unwrap().abs() >= 0.9 * std::f64::consts::PI);
}

#[test]
fn seed_flag_controls_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_edit(
        "golden_cw.toml",
        "noise_rms_v = 0.0",
        "noise_rms_v = 0.005",
        dir.path(),
        "n.toml",
    );
    let cfg = cfg.to_str().unwrap();
    let read = |sub: &str| fs::read(dir.path().join("out/cw").join(sub).join("trace.bin")).unwrap();
    for (sub, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let o = run_in(
            dir.path(),
            &["--config", cfg, "--seed", seed, "simulate", "--out-dir", sub],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/cw/a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("golden_pulsed.toml");
    let o = run_in(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "sweep",
            "--axis",
            "plan.inject_dphi_pi",
            "--values",
            "0.1,0.53,0.9",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("out/pulsed/s.csv"));
    assert_eq!(rows.len(), 3);
    let got: Vec<f64> = rows
        .iter()
        .map(|r| r[3].parse::<f64>().unwrap() / std::f64::consts::PI)
        .collect();
    for (g, w) in got.iter().zip([0.1, 0.53, 0.9]) {
        assert!((g - w).abs() < 1e-6, "{got:?}");
    }
}
