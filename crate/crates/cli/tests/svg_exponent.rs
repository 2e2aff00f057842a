use std::fs;
use std::process::Command;

#[test]
fn free_exponent_report_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("free_wvn.toml");
    fs::write(&cfg, "[periodic]\na = 1.0\nfourier_cos = []\nfourier_sin = []\n\n[wvn]\nc = 1.0\nomega = 1.0\ndelta = 0.0\n\n[boundary]\nalpha = 0.0\n").unwrap();
    let out = dir.path().join("fit");
    let o = Command::new(env!("CARGO_BIN_EXE_wvn"))
        .args(["--out", out.to_str().unwrap(), "exponent", "--config", cfg.to_str().unwrap()])
        .args(["--band", "0", "--sign", "minus", "--side", "right"])
        // d_max ≈ 0.1 in the free band of width π²
        .args(["--span", "0.01"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("exponent.json")).unwrap()).unwrap();
    let rep = &v["report"];
    assert!((rep["predicted_exponent"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let p = rep["fitted_exponent"].as_f64().unwrap();
    assert!((p - 0.5).abs() < 0.025, "fitted {p}");
    let svg = fs::read_to_string(out.join("exponent.svg")).unwrap();
    assert!(svg.contains("slope 0.50"), "{svg}");
    assert!(svg.contains("generated at"));
    assert_eq!(svg.matches("<circle").count(), 9);
}
