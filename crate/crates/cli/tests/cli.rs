use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bundled_panel() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ar1_panel.csv")
}

fn voi(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voi"))
        .args(args)
        .current_dir(cwd)
        .env_remove("VOI_OUTPUT_DIR")
        .output()
        .expect("run voi")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// CSV rows without the `#` echo lines.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn files_in(dir: &Path) -> Vec<String> {
    match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect(),
        Err(_) => Vec::new(),
    }
}

#[test]
fn bundled_panel_regenerates_identically() {
    let dir = TempDir::new().unwrap();
    ok(&voi(dir.path(), &["synth", "--output", "panel.csv"]));
    let fresh = std::fs::read(dir.path().join("panel.csv")).unwrap();
    assert_eq!(fresh, std::fs::read(bundled_panel()).unwrap());
}

#[test]
fn synth_ar1_shape() {
    let dir = TempDir::new().unwrap();
    ok(&voi(
        dir.path(),
        &[
            "synth",
            "--kind",
            "ar1-panel",
            "--length",
            "30",
            "--symbols",
            "3",
        ],
    ));
    let rows = csv_rows(&dir.path().join("voi-out/synth.csv"));
    assert_eq!(rows[0], ["date", "symbol", "close"]);
    assert_eq!(rows.len(), 1 + 30 * 3);
    assert!(rows[1..].iter().all(|r| r[2].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(code(&voi(p, &["frontier", "--sigma", "-1"])), 2);
    assert_eq!(code(&voi(p, &["frontier"])), 2);
    assert_eq!(
        code(&voi(p, &["frontier", "--sigma", "1", "--grid", "2:1:0.5"])),
        2
    );
    assert_eq!(code(&voi(p, &["mi", "--input", "missing.csv"])), 3);
    std::fs::write(p.join("bad.csv"), "date,symbol,close\n2019-01-01,A,-3\n").unwrap();
    let out = voi(p, &["mi", "--input", "bad.csv", "--target", "A"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let panel = bundled_panel();
    let panel = panel.to_str().unwrap();
    assert_eq!(
        code(&voi(p, &["acf", "--input", panel, "--target", "NOPE"])),
        3
    );
    assert_eq!(
        code(&voi(p, &["backtest", "--input", panel, "--shrinkage", "2"])),
        2
    );
    let diverged = voi(
        p,
        &[
            "backtest",
            "--input",
            panel,
            "-m",
            "1",
            "-n",
            "2",
            "--models",
            "NN",
            "--learning-rate",
            "1e300",
        ],
    );
    assert_eq!(code(&diverged), 4);
    assert!(
        files_in(&p.join("voi-out")).is_empty(),
        "no partial outputs"
    );
}

#[test]
fn reruns_are_byte_identical_across_directories() {
    let dir = TempDir::new().unwrap();
    let panel = bundled_panel();
    let panel = panel.to_str().unwrap();
    for out in ["a", "b"] {
        ok(&voi(
            dir.path(),
            &[
                "backtest",
                "--input",
                panel,
                "-m",
                "1..2",
                "-n",
                "2,3",
                "--output-dir",
                out,
            ],
        ));
        ok(&voi(
            dir.path(),
            &[
                "mi",
                "--input",
                panel,
                "-m",
                "1..2",
                "-n",
                "2..4",
                "--output-dir",
                out,
            ],
        ));
        ok(&voi(
            dir.path(),
            &[
                "hartley",
                "--k",
                "1,2",
                "--samples",
                "2000",
                "--output-dir",
                out,
            ],
        ));
    }
    for name in ["report.json", "overlay.csv", "mi.json", "hartley.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn outputs_carry_the_config_echo() {
    let dir = TempDir::new().unwrap();
    let panel = bundled_panel();
    let panel = panel.to_str().unwrap();
    ok(&voi(
        dir.path(),
        &[
            "backtest", "--input", panel, "-m", "1", "-n", "2", "--seed", "42",
        ],
    ));
    let overlay = std::fs::read_to_string(dir.path().join("voi-out/overlay.csv")).unwrap();
    assert!(overlay.starts_with("# voi "));
    assert!(overlay.contains("\"seed\":42"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("voi-out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["echo"]["command"], "backtest");
    assert_eq!(report["echo"]["config"]["seed"], 42);
    assert_eq!(report["config"]["master_seed"], 42);
}

#[test]
fn units_change_only_information_columns() {
    let dir = TempDir::new().unwrap();
    let args = ["frontier", "--sigma", "0.5", "--grid", "0:2:0.25"];
    ok(&voi(
        dir.path(),
        &[&args[..], &["--units", "bits", "--output", "bits.csv"]].concat(),
    ));
    ok(&voi(
        dir.path(),
        &[&args[..], &["--units", "nats", "--output", "nats.csv"]].concat(),
    ));
    let bits = csv_rows(&dir.path().join("bits.csv"));
    let nats = csv_rows(&dir.path().join("nats.csv"));
    assert_eq!(bits[0], ["info", "u", "v", "rmse"]);
    assert_eq!(bits.len(), 1 + 9);
    for (b, n) in bits[1..].iter().zip(&nats[1..]) {
        assert_eq!(b[1..], n[1..]);
        let (ib, in_): (f64, f64) = (b[0].parse().unwrap(), n[0].parse().unwrap());
        assert!((ib * std::f64::consts::LN_2 - in_).abs() < 1e-12);
    }
    let first_rmse: f64 = bits[1][3].parse().unwrap();
    assert_eq!(first_rmse, 0.5);
}

#[test]
fn mi_report_shape() {
    let dir = TempDir::new().unwrap();
    let panel = bundled_panel();
    ok(&voi(
        dir.path(),
        &[
            "mi",
            "--input",
            panel.to_str().unwrap(),
            "-m",
            "1,5",
            "-n",
            "2",
            "--units",
            "nats",
        ],
    ));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("voi-out/mi.json")).unwrap())
            .unwrap();
    assert_eq!(v["units"], "nats");
    assert_eq!(v["target"], "BTC/USD");
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[1]["p"], 10);
    let full = &cells[0]["full"];
    assert_eq!(full["info"], full["nats"]);
    assert!(full["nats"].as_f64().unwrap() >= 0.0);
    assert_eq!(cells[0]["windows"].as_array().unwrap().len(), 23);
}

#[test]
fn acf_lag_zero_is_one() {
    let dir = TempDir::new().unwrap();
    let panel = bundled_panel();
    ok(&voi(
        dir.path(),
        &["acf", "--input", panel.to_str().unwrap(), "--max-lag", "5"],
    ));
    let rows = csv_rows(&dir.path().join("voi-out/acf.csv"));
    assert_eq!(rows[0], ["lag", "acf"]);
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[1], ["0", "1"]);
    let lag1: f64 = rows[2][1].parse().unwrap();
    assert!((lag1 - 0.3).abs() < 0.12, "{lag1}");
}

#[test]
fn config_file_then_flags() {
    let dir = TempDir::new().unwrap();
    let panel = bundled_panel();
    let config = serde_json::json!({
        "input": panel,
        "target": "ETH/USD",
        "m_range": "1..2",
        "n_range": [2],
        "models": ["LM"],
        "seed": 5,
        "output_dir": "from-config"
    });
    std::fs::write(dir.path().join("run.json"), config.to_string()).unwrap();
    ok(&voi(
        dir.path(),
        &["backtest", "--config", "run.json", "--seed", "9"],
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("from-config/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["config"]["target"], "ETH/USD");
    assert_eq!(report["config"]["symbols"][0], "ETH/USD");
    assert_eq!(report["config"]["master_seed"], 9);
    assert_eq!(report["cells"].as_array().unwrap().len(), 2);

    std::fs::write(dir.path().join("typo.json"), r#"{"targt": "X"}"#).unwrap();
    assert_eq!(
        code(&voi(dir.path(), &["backtest", "--config", "typo.json"])),
        2
    );
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_voi"))
        .args(["frontier", "--sigma", "1"])
        .current_dir(dir.path())
        .env("VOI_OUTPUT_DIR", "env-dir")
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("env-dir/frontier.csv").exists());
    let out = Command::new(env!("CARGO_BIN_EXE_voi"))
        .args(["frontier", "--sigma", "1", "--output-dir", "flag-dir"])
        .current_dir(dir.path())
        .env("VOI_OUTPUT_DIR", "env-dir2")
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("flag-dir/frontier.csv").exists());
    assert!(!dir.path().join("env-dir2").exists());
}

#[test]
fn hartley_dominated_by_shannon() {
    let dir = TempDir::new().unwrap();
    ok(&voi(
        dir.path(),
        &[
            "hartley",
            "--k",
            "1,2,4",
            "--samples",
            "20000",
            "--units",
            "nats",
        ],
    ));
    let rows = csv_rows(&dir.path().join("voi-out/hartley.csv"));
    assert_eq!(
        rows[0],
        ["k", "info", "u_hartley", "u_hartley_se", "u_shannon"]
    );
    for r in &rows[1..] {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[4] + 3.0 * v[3], "{r:?}");
    }
    let k2: Vec<f64> = rows[2].iter().map(|x| x.parse().unwrap()).collect();
    assert!((k2[1] - std::f64::consts::LN_2).abs() < 1e-15);
}
