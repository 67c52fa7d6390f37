use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fockstate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn preset(dir: &Path, name: &str) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"));
    let dst = dir.join(format!("{name}.json"));
    std::fs::copy(src, &dst).unwrap();
    dst
}

fn edited(dir: &Path, name: &str, edit: impl Fn(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(preset(dir, name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(format!("{name}-edited.json"));
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_records_and_reports_rate() {
    let dir = TempDir::new().unwrap();
    let cfg = preset(dir.path(), "single_photon");
    let out = dir.path().join("rec.jsonl");
    let report = stdout_json(&run(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--samples",
        "3000",
    ]));
    assert_eq!(report["records"], 3000);
    let rate = report["herald_rate"].as_f64().unwrap();
    assert!(rate > 0.9e5 && rate < 3.6e5, "rate {rate}");
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3001);
    assert!(lines[0].starts_with("{\"header\""));
    let first: Value = serde_json::from_str(lines[1]).unwrap();
    for key in ["pulse", "x", "theta", "clicks"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(first["clicks"], 1);
}

#[test]
fn pipeline_is_byte_identical_for_same_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = preset(dir.path(), "two_photon");
    let mut files = Vec::new();
    for tag in ["a", "b"] {
        let rec = dir.path().join(format!("{tag}.jsonl"));
        let rho = dir.path().join(format!("{tag}.json"));
        stdout_json(&run(&[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(&rec),
            "--samples",
            "5000",
        ]));
        stdout_json(&run(&[
            "reconstruct",
            "--in",
            s(&rec),
            "--out",
            s(&rho),
            "--dim",
            "6",
            "--eta",
            "0.85",
        ]));
        files.push((std::fs::read(&rec).unwrap(), std::fs::read(&rho).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let rec = dir.path().join("c.jsonl");
    stdout_json(&run(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&rec),
        "--samples",
        "5000",
        "--seed",
        "9",
    ]));
    assert_ne!(std::fs::read(&rec).unwrap(), files[0].0);
}

#[test]
fn reconstruct_and_analyze_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = preset(dir.path(), "single_photon");
    let rec = dir.path().join("rec.jsonl");
    let rho = dir.path().join("rho.json");
    stdout_json(&run(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&rec),
        "--samples",
        "20000",
    ]));
    let rep = stdout_json(&run(&[
        "reconstruct",
        "--in",
        s(&rec),
        "--out",
        s(&rho),
        "--dim",
        "8",
        "--eta",
        "0.85",
        "--bins",
        "200",
    ]));
    assert_eq!(rep["dim"], 8);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rho.report.json")).unwrap()).unwrap();
    assert!(report["loglik_trace"].as_array().unwrap().len() as u64 == report["iterations"].as_u64().unwrap());

    let out = dir.path().join("analysis");
    let a = stdout_json(&run(&[
        "analyze",
        "--in",
        s(&rho),
        "--reference",
        s(&rho),
        "--out",
        s(&out),
        "--points",
        "41",
    ]));
    assert!((a["fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let w00 = a["w00"].as_f64().unwrap();
    assert!(w00 < 0.0, "W(0,0) = {w00}");
    for f in [
        "report.json",
        "wigner.csv",
        "cross_p0.csv",
        "cross_x0.csv",
        "marginal.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let grid = std::fs::read_to_string(out.join("wigner.csv")).unwrap();
    assert_eq!(grid.lines().count(), 42);
    assert!(std::fs::read_to_string(out.join("cross_p0.csv"))
        .unwrap()
        .starts_with("x,w\n"));

    let lossy = stdout_json(&run(&[
        "analyze",
        "--in",
        s(&rho),
        "--reference-fock",
        "1",
        "--eta",
        "0.64",
        "--points",
        "11",
    ]));
    assert!(lossy["fidelity"].as_f64().unwrap() > 0.95);
}

#[test]
fn analyze_rejects_dimension_mismatch() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, r#"{"dim":1,"entries":[[[1.0,0.0]]]}"#).unwrap();
    std::fs::write(
        &b,
        r#"{"dim":2,"entries":[[[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]]}"#,
    )
    .unwrap();
    let out = run(&["analyze", "--in", s(&a), "--reference", s(&b), "--points", "5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let typo = edited(dir.path(), "single_photon", |v| {
        v["source"]["lamda"] = Value::from(0.1);
    });
    let out = run(&[
        "simulate",
        "--config",
        s(&typo),
        "--out",
        s(&dir.path().join("r.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));

    let bad = edited(dir.path(), "single_photon", |v| {
        v["bhd"]["eta_bhd"] = Value::from(1.5);
    });
    let out = run(&["predict", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta_bhd"));
}

#[test]
fn degenerate_herald_and_missing_files() {
    let dir = TempDir::new().unwrap();
    let dark = edited(dir.path(), "single_photon", |v| {
        v["source"]["lambda"] = Value::from(0.0);
    });
    let out = run(&[
        "simulate",
        "--config",
        s(&dark),
        "--out",
        s(&dir.path().join("r.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate herald"));

    let p = stdout_json(&run(&["predict", "--config", s(&dark)]));
    assert_eq!(p["degenerate_herald"], true);
    assert!((p["detected_photon_numbers"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = run(&[
        "reconstruct",
        "--in",
        s(&dir.path().join("none.jsonl")),
        "--out",
        s(&dir.path().join("x.json")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn predict_reports_rates_and_curves() {
    let dir = TempDir::new().unwrap();
    let cfg = preset(dir.path(), "three_photon");
    let p = stdout_json(&run(&["predict", "--config", s(&cfg)]));
    let rates = p["rates"].as_array().unwrap();
    assert_eq!(rates.len(), 3);
    assert!((p["total_efficiency"].as_f64().unwrap() - 0.85 * 0.66 * 0.97).abs() < 1e-12);
    let out = run(&["predict", "--config", s(&cfg), "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("x,marginal,fock_marginal\n"));
    assert_eq!(text.lines().count(), 202);
}

#[test]
fn povm_table() {
    let out = run(&["povm", "--format", "csv", "--n-max", "6"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,k0,k1,k2,k3");
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[1], "0,1,0,0,0");
    for line in &lines[1..] {
        let total: f64 = line.split(',').skip(1).map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let v = stdout_json(&run(&["povm"]));
    assert_eq!(v["p_k_given_n"].as_array().unwrap().len(), 4);
}

#[test]
fn analyze_spectra_budget() {
    let dir = TempDir::new().unwrap();
    let grid: Vec<f64> = (0..401).map(|i| 800.0 + 0.15 * i as f64).collect();
    let write_spec = |name: &str, fwhm: f64| {
        let sigma = fwhm / (8.0 * 2f64.ln()).sqrt();
        let mut text = String::from("wavelength_nm,amplitude\n");
        for w in &grid {
            text.push_str(&format!(
                "{w},{}\n",
                (-(w - 830.0f64).powi(2) / (4.0 * sigma * sigma)).exp()
            ));
        }
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let sig = write_spec("sig.csv", 3.0);
    let lo = write_spec("lo.csv", 3.0);
    let jsi = dir.path().join("jsi.csv");
    let axis: Vec<f64> = (0..30).map(|i| 825.0 + 0.35 * i as f64).collect();
    let mut text = String::from("signal\\trigger");
    for t in &axis {
        text.push_str(&format!(",{t}"));
    }
    text.push('\n');
    for s in &axis {
        text.push_str(&s.to_string());
        for t in &axis {
            text.push_str(&format!(
                ",{}",
                (-(s - 830.0f64).powi(2) / 4.0 - (t - 830.0f64).powi(2) / 2.0).exp()
            ));
        }
        text.push('\n');
    }
    std::fs::write(&jsi, text).unwrap();

    let v = stdout_json(&run(&[
        "analyze-spectra",
        "--in",
        s(&jsi),
        "--signal",
        s(&sig),
        "--lo",
        s(&lo),
        "--spatial",
        "0.66",
    ]));
    assert!((v["schmidt_purity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["spectral_overlap"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let total = v["total"].as_f64().unwrap();
    assert!((total - 0.85 * 0.66).abs() < 1e-6, "total {total}");

    let v = stdout_json(&run(&["analyze-spectra", "--visibility", "0.9", "--eta-p", "0.97"]));
    assert!((v["budget"]["eta_mm"].as_f64().unwrap() - 0.81).abs() < 1e-12);

    let out = run(&["analyze-spectra", "--signal", s(&sig)]);
    assert_eq!(out.status.code(), Some(2));
}
