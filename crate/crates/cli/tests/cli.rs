use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FREE: &str = "[periodic]\na = 1.0\nfourier_cos = []\nfourier_sin = []\n\n[wvn]\nc = 1.0\nomega = 1.0\ndelta = 0.0\n\n[boundary]\nalpha = 0.0\n";

fn wvn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wvn")).args(args).env("WVN_THREADS", "1").output().expect("spawn wvn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p
}

/// Data rows of a CSV with a leading hash comment.
fn rows(text: &str) -> Vec<Vec<String>> {
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_sha256="));
    lines.skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn free_band_edges_are_squares() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), FREE);
    let o = wvn(&["bands", "--config", cfg.to_str().unwrap(), "--lambda-max", "50"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 2);
    for (j, row) in r.iter().enumerate() {
        let lo: f64 = row[1].parse().unwrap();
        let hi: f64 = row[2].parse().unwrap();
        assert!((lo - (std::f64::consts::PI * j as f64).powi(2)).abs() < 1e-8);
        assert!((hi - (std::f64::consts::PI * (j + 1) as f64).powi(2)).abs() < 1e-8);
    }
}

#[test]
fn free_resonance_has_quarter_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), FREE);
    let o = wvn(&["resonances", "--config", cfg.to_str().unwrap(), "--lambda-max", "12", "--no-alpha-cr"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    let minus = r.iter().find(|row| row[0] == "0" && row[1] == "minus").unwrap();
    assert!((minus[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    assert!((minus[3].parse::<f64>().unwrap() - 0.25).abs() < 1e-9);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no pseudogap predicted"));
}

#[test]
fn model_telescopes_at_beta_one() {
    let o = wvn(&["model", "--beta", "1", "--epsilon-grid", "0", "--remainder", "zero", "--f", "1,0,0,0"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let lim = &v["report"]["runs"][0]["limit"];
    assert!((lim[0][0].as_f64().unwrap() - 1.0).abs() < 1e-8);
    for c in [&lim[0][1], &lim[1][0], &lim[1][1]] {
        assert!(c.as_f64().unwrap().abs() < 1e-12);
    }
}

#[test]
fn density_writes_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &FREE.replace("c = 1.0", "c = 0.0"));
    let out = dir.path().join("out");
    let args = [
        "--out",
        out.to_str().unwrap(),
        "--no-timestamp",
        "density",
        "--config",
        cfg.to_str().unwrap(),
        "--lambda-min",
        "1",
        "--lambda-max",
        "9",
        "--points",
        "3",
    ];
    let o = wvn(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("density.csv")).unwrap();
    let r = rows(&csv);
    for (row, l) in r.iter().zip([1.0f64, 5.0, 9.0]) {
        let rho: f64 = row[1].parse().unwrap();
        assert!((rho - l.sqrt() / std::f64::consts::PI).abs() < 1e-6, "{row:?}");
        assert_eq!(row[4], "true");
        // 17 significant digits
        assert_eq!(row[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_sha256"].as_str().unwrap();
    assert!(csv.starts_with(&format!("# config_sha256={hash}")));
    assert!(manifest.get("wall_clock_seconds").is_none());

    let o2 = wvn(&args);
    assert!(o2.status.success());
    assert_eq!(csv, fs::read_to_string(out.join("density.csv")).unwrap());
}

#[test]
fn model_trajectory_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = wvn(&[
        "--out",
        out.to_str().unwrap(),
        "--no-timestamp",
        "model",
        "--beta",
        "0",
        "--epsilon-grid",
        "0.1,0.05,0.025",
        "--f",
        "1,0,0,0",
        "--ymax",
        "50",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&fs::read_to_string(out.join("trajectory_plus.csv")).unwrap());
    assert!(r.len() > 10);
    // β = 0: h is constant
    for row in &r {
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
    }
    let svg = fs::read_to_string(out.join("trajectory_plus.svg")).unwrap();
    assert!(svg.starts_with("<svg") && !svg.contains("generated at"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(wvn(&["bands", "--bogus"]).status.code(), Some(2));
    assert_eq!(wvn(&["model", "--epsilon-grid", "0.1"]).status.code(), Some(2));
    assert_eq!(wvn(&["model", "--beta", "1", "--epsilon-grid", "0", "--f", "1,2"]).status.code(), Some(2));
    assert_eq!(wvn(&["verify", "--criterion", "12"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wvn(&["bands", "--config", dir.path().join("missing.toml").to_str().unwrap()]).status.code(), Some(1));
    let cfg = config(dir.path(), &FREE.replace("omega = 1.0", &format!("omega = {}", std::f64::consts::PI)));
    let o = wvn(&["bands", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resonant"));
    assert_eq!(wvn(&["model", "--beta", "-1", "--epsilon-grid", "0"]).status.code(), Some(1));
}

#[test]
fn verify_single_criterion() {
    let o = wvn(&["verify", "--criterion", "1"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 1);
    assert!(s.starts_with("criterion 1 [PASS]"));
}
