use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn tlres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlres")).args(args).output().unwrap()
}

fn run_config(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    tlres(&args)
}

fn result(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("job.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn solve_writes_envelope_and_mode_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config("solve", &configs_dir().join("solve_case_i.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(tmp.path());
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "solve");
    assert_eq!(r["status"], "ok");
    let f_r = r["result"]["modes"][0]["f_r_hz"].as_f64().unwrap();
    assert!((f_r / 6.778e9 - 1.0).abs() < 5e-3);
    let csv = fs::read_to_string(tmp.path().join("modes.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("mode_n,f_r_hz,q_i"));
    assert!(tmp.path().join("standing_wave_n1.csv").exists());
}

#[test]
fn calibrate_from_mode_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config("calibrate", &configs_dir().join("calibrate_dut_a.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(tmp.path());
    let f_open = r["result"]["reactance"]["f_open_hz"].as_f64().unwrap();
    let c = r["result"]["reactance"]["load_value"].as_f64().unwrap();
    let t = r["result"]["loss"]["tan_delta"].as_f64().unwrap();
    assert!((f_open - 3.899e9).abs() < 2e6);
    assert!((c - 388e-15).abs() < 3e-15);
    assert!((t / 5.57e-6 - 1.0).abs() < 0.07);
    // exactly determined is informational and keeps strict mode at 0
    let o = run_config("calibrate", &configs_dir().join("calibrate_dut_a.toml"), tmp.path(), &["--strict"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("single_mode_distribution.toml");
    for dir in [a.path(), b.path()] {
        assert_eq!(run_config("stats", &cfg, dir, &[]).status.code(), Some(0));
    }
    for name in ["result.json", "tan_delta_samples.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    assert_eq!(run_config("stats", &cfg, c.path(), &["--seed", "11"]).status.code(), Some(0));
    assert_eq!(result(c.path())["seed"], 11);
    assert_ne!(fs::read(a.path().join("result.json")).unwrap(), fs::read(c.path().join("result.json")).unwrap());
}

#[test]
fn extract_sample_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config("extract", &configs_dir().join("extract_sample.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(tmp.path());
    let tau = r["result"]["fit"]["delay_tau"].as_f64().unwrap();
    assert!((tau - 40e-9).abs() < 2e-9, "{tau}");
    let model = fs::read_to_string(tmp.path().join("model_trace.csv")).unwrap();
    assert_eq!(model.lines().next(), Some("freq_hz,re_s21,im_s21"));
}

#[test]
fn unknown_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "schema_version = 1\n[line]\nz0 = 50.0\nf_open = 7e9\nlength = 1.0\n[load]\nkind = \"capacitor\"\nvalue = 1e-13\n[solve]\nmodes = [1]\n",
    );
    let o = run_config("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("length"));
}

#[test]
fn wrong_schema_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "schema_version = 2\n");
    assert_eq!(run_config("solve", &cfg, tmp.path(), &[]).status.code(), Some(2));
}

#[test]
fn missing_section_and_bad_values_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "schema_version = 1\n");
    assert_eq!(run_config("oracle", &cfg, tmp.path(), &[]).status.code(), Some(2));
    let cfg = write_config(
        tmp.path(),
        "schema_version = 1\n[line]\nz0 = -50.0\nf_open = 7e9\n[load]\nkind = \"capacitor\"\nvalue = 1e-13\n[solve]\nmodes = [1]\n",
    );
    assert_eq!(run_config("solve", &cfg, tmp.path(), &[]).status.code(), Some(2));
}

#[test]
fn bad_trace_header_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("t.csv"), "f,re,im\n1,1,0\n").unwrap();
    let cfg = write_config(tmp.path(), "schema_version = 1\n[extract]\ntrace_csv = \"t.csv\"\n");
    assert_eq!(run_config("extract", &cfg, &tmp.path().join("out"), &[]).status.code(), Some(2));
}

#[test]
fn degenerate_trace_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("freq_hz,re_s21,im_s21\n");
    for i in 0..50 {
        csv.push_str(&format!("{},1,0\n", 5e9 + 1e5 * i as f64));
    }
    fs::write(tmp.path().join("t.csv"), csv).unwrap();
    let cfg = write_config(tmp.path(), "schema_version = 1\n[extract]\ntrace_csv = \"t.csv\"\n");
    assert_eq!(run_config("extract", &cfg, &tmp.path().join("out"), &[]).status.code(), Some(3));
}

#[test]
fn strict_promotes_low_confidence() {
    let tmp = tempfile::tempdir().unwrap();
    // Q_open / Q_i sits next to 1 - p, where the loss-tangent sigma diverges
    let cfg = write_config(
        tmp.path(),
        "schema_version = 1\n[stats.monte_carlo]\nrel_sigma = 0.01\nn_samples = 2000\nmodel = { input = \"q_open\", phi = 6.2, tan_delta = 1e-9, q_open = 1e5, exponent_s = 1.0 }\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(run_config("stats", &cfg, &out, &[]).status.code(), Some(0));
    assert_eq!(result(&out)["status"], "low_confidence");
    assert_eq!(run_config("stats", &cfg, &out, &["--strict"]).status.code(), Some(4));
}
