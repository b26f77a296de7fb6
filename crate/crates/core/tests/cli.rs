use std::path::Path;
use std::process::{Command, Output};

const SETUP: &str = r#""observable": "sigma_x", "psi": [[1,0],[0,0]], "phi": [[0.6,0],[0.8,0]]"#;

fn weakval(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakval"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn summary(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(line: &str, key: &str) -> String {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {line}"))
        .to_string()
}

#[test]
fn help_and_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(weakval(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(weakval(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(weakval(&["simulate", "--trials", "1.5"], dir.path()).status.code(), Some(2));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = weakval(&["density", "--config", r#"{"observable": "sigma_x", "lamda": 0.1}"#], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    let o = weakval(&["density", "--config", r#"{"observable": "sigma_x", "psi": [[1,0],["a",0]]}"#], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("psi"));
    let missing = dir.path().join("absent.json");
    let o = weakval(&["density", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_and_numeric_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let orthogonal = r#"{"observable": "sigma_z", "psi": [[1,0],[0,0]], "phi": [[0,0],[1,0]]}"#;
    assert_eq!(weakval(&["weak-value", "--config", orthogonal], dir.path()).status.code(), Some(3));
    let coarse = format!(r#"{{{SETUP}, "sampler": {{"grid_halfwidth": 6, "grid_points": 256, "seed": 0}}}}"#);
    let o = weakval(&["simulate", "--config", &coarse, "--trials", "100"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flags_override_config_and_trials_accept_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{{SETUP}, "trials": 10, "seed": 1, "lambda": 0.5}}"#);
    let o = weakval(&["simulate", "--config", &cfg, "--trials", "2e4", "--seed", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = summary(&o);
    assert_eq!(value(&line, "n_total"), "20000");
    assert_eq!(value(&line, "seed"), "3");
    let records = std::fs::read_to_string(dir.path().join("simulate-records.csv")).unwrap();
    assert_eq!(records.lines().count(), 20000 + 2);
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("simulate-stats.json")).unwrap()).unwrap();
    assert_eq!(stats["result"]["statistics"]["n_total"], 20000);
    assert_eq!(stats["config_hash"], value(&line, "config_hash"));
}

#[test]
fn config_hash_ignores_threads_and_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = format!("{{{SETUP}}}");
    let ha = value(&summary(&weakval(&["kick", "--config", &cfg, "--threads", "1"], a.path())), "config_hash");
    let hb = value(&summary(&weakval(&["kick", "--config", &cfg, "--threads", "4"], b.path())), "config_hash");
    assert_eq!(ha, hb);
    let hc = value(&summary(&weakval(&["kick", "--config", &cfg, "--lambda", "0.3"], b.path())), "config_hash");
    assert_ne!(ha, hc);
}

#[test]
fn config_file_and_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, format!(r#"{{"command": "postselect-prob", {SETUP}, "format": "json"}}"#)).unwrap();
    let out = dir.path().join("out");
    let o = weakval(&["--config", path.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("postselect-prob.json")).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4]["lambda"], "extrapolated");
    let coeff = value(&summary(&o), "second_order_coeff").parse::<f64>().unwrap();
    let fit = rows[4]["scaled_correction"].as_f64().unwrap();
    assert!((fit - coeff).abs() < 1e-3 * coeff.abs());
}

#[test]
fn every_command_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{{SETUP}, "observable_b": "sigma_y", "n_values": [25, 50], "trials": 2000}}"#);
    let expected = [
        ("weak-value", "weak-value.csv"),
        ("density", "density.csv"),
        ("postselect-prob", "postselect-prob.csv"),
        ("kick", "kick.csv"),
        ("sequential", "sequential.csv"),
        ("collective", "collective.csv"),
        ("lindblad", "lindblad-gdi.json"),
        ("disturbance", "disturbance.csv"),
        ("simulate", "simulate-stats.json"),
        ("threshold", "threshold-records.csv"),
        ("anomalous", "anomalous.json"),
    ];
    for (cmd, file) in expected {
        // a single coupling also replaces the grid, so grid commands emit one row
        let lambda = if cmd == "threshold" { "0.01" } else { "0.3" };
        let o = weakval(&[cmd, "--config", &cfg, "--lambda", lambda], dir.path());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(value(&summary(&o), "command"), cmd);
        assert!(dir.path().join(file).exists(), "{cmd} did not write {file}");
    }
}
