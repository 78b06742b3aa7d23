use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn jkoflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jkoflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(jkoflow(&["--help"]).status.code(), Some(0));
    let v = jkoflow(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).starts_with("jkoflow 0."));
}

#[test]
fn argument_errors_exit_three() {
    assert_eq!(jkoflow(&["bogus"]).status.code(), Some(3));
    assert_eq!(jkoflow(&["diagram", "--tua", "1"]).status.code(), Some(3));
    assert_eq!(jkoflow(&["diagram", "--domain", "circle:1"]).status.code(), Some(3));
    let o = jkoflow(&["jko-step", "--tau=-1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("flow.tau"), "{}", stderr(&o));
}

#[test]
fn single_site_fills_the_domain() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "one");
    let o = jkoflow(&["diagram", "--n-points", "1", "--domain", "square:1", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cells = json(&dir.path().join("one/diagram.json"));
    let cells = cells.as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert!((cells[0]["area"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(cells[0]["vertices"].as_array().unwrap().len(), 4);
    let svg = fs::read_to_string(dir.path().join("one/snapshot_0.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polygon").count(), 2);
}

#[test]
fn csv_points_get_uniform_masses() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("pts.csv");
    fs::write(&csv, "x,y\n-0.5,0\n0.5,0\n").unwrap();
    let out = out_arg(&dir, "two");
    let o = jkoflow(&[
        "diagram",
        "--domain",
        "square:2",
        "--points-csv",
        csv.to_str().unwrap(),
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_csv(&dir.path().join("two/points_0.csv"));
    assert_eq!(rows, vec![vec![-0.5, 0.0, 0.5], vec![0.5, 0.0, 0.5]]);
    let cells = json(&dir.path().join("two/diagram.json"));
    for c in cells.as_array().unwrap() {
        assert!((c["area"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    }
}

#[test]
fn csv_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "x,y\n0,0\nNaN,1\n").unwrap();
    let o = jkoflow(&[
        "diagram",
        "--points-csv",
        csv.to_str().unwrap(),
        "--out",
        &out_arg(&dir, "o"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    fs::write(&csv, "x,y,mass\n0,0,1\n1,1,0\n").unwrap();
    let o = jkoflow(&[
        "diagram",
        "--points-csv",
        csv.to_str().unwrap(),
        "--out",
        &out_arg(&dir, "o"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"flow": {"tua": 0.1}}"#).unwrap();
    let o = jkoflow(&["jko-step", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("flow.tua"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"seed": 7, "points": {"n_points": 12}, "flow": {"tau": 0.05}}"#,
    )
    .unwrap();
    let out = out_arg(&dir, "o");
    let o = jkoflow(&[
        "jko-step",
        "--config",
        cfg.to_str().unwrap(),
        "--n-points",
        "9",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = json(&dir.path().join("o/manifest.json"));
    assert_eq!(m["config"]["seed"], 7);
    assert_eq!(m["config"]["points"]["n_points"], 9);
    assert_eq!(m["config"]["flow"]["tau"], 0.05);
    assert_eq!(read_csv(&dir.path().join("o/points_1.csv")).len(), 9);
}

#[test]
fn runs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    for name in ["a", "b"] {
        let o = jkoflow(&[
            "jko-step",
            "--n-points",
            "25",
            "--seed",
            "3",
            "--out",
            &out_arg(&dir, name),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["points_1.csv", "trace.json", "solver_log.jsonl", "snapshot_0.svg"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn manifest_lists_existing_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "d");
    let o = jkoflow(&[
        "flow-diffusion",
        "--n-points",
        "20",
        "--steps",
        "3",
        "--snapshot-every",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| l.starts_with("step"))
            .count(),
        3
    );
    let m = json(&dir.path().join("d/manifest.json"));
    let files: Vec<&str> = m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    for f in [
        "trace.json",
        "points_0.csv",
        "points_3.csv",
        "snapshot_0.svg",
        "snapshot_2.svg",
    ] {
        assert!(files.contains(&f), "{f} missing from {files:?}");
    }
    for f in &files {
        assert!(dir.path().join("d").join(f).exists(), "{f}");
    }
    assert_eq!(m["color_scale"]["quantity"], "density");
    let trace = json(&dir.path().join("d/trace.json"));
    assert_eq!(trace["steps"].as_array().unwrap().len(), 3);
}

#[test]
fn crowd_writes_grids() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir, "c");
    let o = jkoflow(&[
        "flow-crowd",
        "--resolution",
        "12",
        "--steps",
        "2",
        "--tau",
        "0.02",
        "--out",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for k in 0..=2 {
        let rows = read_csv(&dir.path().join(format!("c/grid_{k}.csv")));
        assert_eq!(rows.len(), 144);
        let mass: f64 = rows.iter().map(|r| r[4]).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(rows.iter().all(|r| r[5] <= 1.0 + 1e-9));
    }
}

#[test]
fn validate_prints_reports() {
    let dir = TempDir::new().unwrap();
    let o = jkoflow(&[
        "validate",
        "--suite",
        "derivatives",
        "--instances",
        "2",
        "--out",
        &out_arg(&dir, "v"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let reports: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let reports = reports.as_array().unwrap();
    assert!(!reports.is_empty());
    assert!(reports.iter().all(|r| r["passed"] == true));
    assert_eq!(
        json(&dir.path().join("v/validate.json")),
        serde_json::Value::Array(reports.clone())
    );
}
