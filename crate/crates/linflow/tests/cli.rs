use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use linflow::io::{CsvTable, Manifest, TRAJECTORY_COLUMNS};
use linflow::RunConfig;
use serde_json::Value;

fn linflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linflow"))
        .current_dir(dir)
        .env("LINFLOW_THREADS", "1")
        .args(args)
        .output()
        .expect("spawn linflow")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn check_manifest(dir: &Path) -> Manifest {
    let manifest: Manifest = serde_json::from_value(json(&dir.join("manifest.json"))).unwrap();
    let mut on_disk: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(manifest.files, on_disk);
    let cfg: RunConfig = serde_json::from_value(json(&dir.join("config.json"))).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    assert!(manifest.version.starts_with("linflow "));
    manifest
}

#[test]
fn reproduce_fig1_default() {
    let tmp = tempfile::tempdir().unwrap();
    let o = linflow(tmp.path(), &["reproduce-fig1", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = tmp.path().join("run");
    let m = check_manifest(&dir);
    assert_eq!(m.command, "reproduce-fig1");
    for n in [2, 3, 4, 6] {
        let table = CsvTable::read(&dir.join(format!("trajectory_N{n}.csv"))).unwrap();
        assert!(table.comments[0].starts_with("linflow-trajectory v1"));
        assert_eq!(table.columns, TRAJECTORY_COLUMNS);
        assert_eq!(table.rows.len(), 1001);
        let d = table.column("dist_sq").unwrap();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "N={n}");
    }
    let svg = fs::read_to_string(dir.join("fig1.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert!(!stderr(&o).contains("warning"));
}

#[test]
fn short_horizon_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let o = linflow(
        tmp.path(),
        &["reproduce-fig1", "--steps", "10", "--out", "short"],
    );
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("too short"));
    let table = CsvTable::read(&tmp.path().join("short/trajectory_N2.csv")).unwrap();
    assert_eq!(table.rows.len(), 2);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = linflow(
            tmp.path(),
            &[
                "reproduce-fig1",
                "--seed",
                "7",
                "--steps",
                "2000",
                "--out",
                out,
            ],
        );
        assert_eq!(code(&o), 0);
    }
    for f in ["trajectory_N2.csv", "trajectory_N6.csv", "fig1.svg"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let o = linflow(
        tmp.path(),
        &[
            "reproduce-fig1",
            "--seed",
            "8",
            "--steps",
            "2000",
            "--out",
            "c",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_ne!(
        fs::read(tmp.path().join("a/trajectory_N2.csv")).unwrap(),
        fs::read(tmp.path().join("c/trajectory_N2.csv")).unwrap()
    );
}

#[test]
fn simulate_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = linflow(
        tmp.path(),
        &[
            "simulate",
            "--out",
            "sim",
            "--steps",
            "20000",
            "--set",
            "instance.init_scale=1.5",
            "--set",
            "instance.init_angle_deg=20",
            "--set",
            "depth_list=[2,3]",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dir = tmp.path().join("sim");
    check_manifest(&dir);
    for n in [2, 3] {
        let rep = json(&dir.join(format!("exit_report_N{n}.json")));
        assert_eq!(rep["exited"], Value::Bool(false));
        assert!(rep["first_exit_index"].is_null());
        let margins = rep["margins_csv_path"].as_str().unwrap();
        let table = CsvTable::read(&dir.join(margins)).unwrap();
        assert_eq!(
            table.columns,
            ["t", "lower", "upper", "alignment", "inside"]
        );
        assert!(table.rows.iter().all(|r| r[4] == "true"));

        let traj = CsvTable::read(&dir.join(format!("trajectory_N{n}.csv"))).unwrap();
        assert_eq!(&traj.columns[..8], TRAJECTORY_COLUMNS);
        assert_eq!(&traj.columns[8..], ["bound_value", "margin"]);
        let bound = traj.column("bound_value").unwrap();
        let dist = traj.column("dist_sq").unwrap();
        assert_eq!(bound.len(), table.rows.len());
        assert!(bound
            .iter()
            .zip(&dist)
            .all(|(b, d)| d <= &(b * (1.0 + 1e-6) + 1e-9)));
        let dom = json(&dir.join(format!("domination_N{n}.json")));
        assert_eq!(dom["status"]["kind"], "checked");
        assert_eq!(dom["violations"], 0);
    }
    let data = linflow::io::read_dataset(&dir).unwrap();
    assert_eq!((data.d_x(), data.d_y(), data.m()), (5, 1, 50));
    assert!(data.is_whitened());
}

#[test]
fn simulate_factor_flow_and_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let o = linflow(
        tmp.path(),
        &[
            "simulate",
            "--out",
            "f",
            "--steps",
            "2000",
            "--set",
            "simulate.flow=factor",
            "--set",
            "depth_list=[3]",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let traj = CsvTable::read(&tmp.path().join("f/trajectory_N3.csv")).unwrap();
    let res = traj.column("balance_residual").unwrap();
    assert!(res.iter().all(|r| r.is_finite() && *r < 1e-6));
    // Fig-1 scale starts above beta * s_Z.
    let rep = json(&tmp.path().join("f/exit_report_N3.json"));
    assert_eq!(rep["exited"], Value::Bool(true));
    assert_eq!(rep["first_exit_index"], 0);
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(
        &cfg_path,
        r#"{"instance": {"seed": 3}, "depth_list": [1], "integrator": {"steps": 50}}"#,
    )
    .unwrap();
    let o = linflow(
        tmp.path(),
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--set",
            "integrator.record_every=10",
            "--out",
            "c",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let resolved: RunConfig =
        serde_json::from_value(json(&tmp.path().join("c/config.json"))).unwrap();
    assert_eq!(resolved.instance.seed, 3);
    assert_eq!(resolved.depth_list, vec![1]);
    assert_eq!(
        (resolved.integrator.steps, resolved.integrator.record_every),
        (50, 10)
    );
    assert_eq!(resolved.instance.m, 50);
    let table = CsvTable::read(&tmp.path().join("c/trajectory_N1.csv")).unwrap();
    assert_eq!(table.rows.len(), 6);
}

#[test]
fn input_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 6] = [
        &["verify", "--bogus"],
        &["nonsense"],
        &["simulate", "--set", "instance.nope=1"],
        &["simulate", "--set", "depth_list=[]"],
        &["simulate", "--config", "missing.json"],
        &["simulate", "--set", "instance.d_x=0"],
    ];
    for args in cases {
        let o = linflow(tmp.path(), args);
        assert_eq!(code(&o), 3, "{args:?}: {}", stderr(&o));
    }
    fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(
        code(&linflow(tmp.path(), &["simulate", "--config", "bad.json"])),
        3
    );
    assert_eq!(code(&linflow(tmp.path(), &["--help"])), 0);
}

#[test]
fn divergence_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = linflow(
        tmp.path(),
        &["reproduce-fig1", "--set", "integrator.dt=0.5", "--out", "d"],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("step"));
}

#[test]
fn landscape_outcomes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = linflow(tmp.path(), &["landscape", "--out", "ok"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = json(&tmp.path().join("ok/stationarity.json"));
    assert_eq!(rep["report"]["classification"], "sosp-candidate");
    assert_eq!(rep["spurious"], Value::Bool(false));
    assert!(rep["gap"].as_f64().unwrap() <= rep["gap_tolerance"].as_f64().unwrap());
    check_manifest(&tmp.path().join("ok"));

    let o = linflow(
        tmp.path(),
        &["landscape", "--out", "zero", "--set", "landscape.init=zero"],
    );
    assert_eq!(code(&o), 0);
    let rep = json(&tmp.path().join("zero/stationarity.json"));
    assert_eq!(rep["spurious"], Value::Bool(true));
    assert!(stdout(&o).contains("spurious"));

    let o = linflow(
        tmp.path(),
        &[
            "landscape",
            "--out",
            "probe",
            "--set",
            "landscape.init=zero",
            "--set",
            "landscape.depth=2",
            "--set",
            "landscape.probe_only=true",
        ],
    );
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("strict saddle"));

    let o = linflow(
        tmp.path(),
        &["landscape", "--out", "short", "--set", "landscape.steps=2"],
    );
    assert_eq!(code(&o), 4);
    let rep = json(&tmp.path().join("short/stationarity.json"));
    assert_eq!(rep["report"]["classification"], "not-stationary");
}

#[test]
fn verify_pass_and_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let o = linflow(
        tmp.path(),
        &[
            "verify",
            "--out",
            "v",
            "--set",
            r#"checks=["aw-crosscheck","gradient-oracle"]"#,
        ],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("PASS gradient-oracle"));
    assert!(out.contains("PASS aw-crosscheck max_rel_error="));
    let rep = json(&tmp.path().join("v/verify.json"));
    assert_eq!(rep["passed"], Value::Bool(true));
    assert_eq!(rep["checks"].as_array().unwrap().len(), 2);

    let o = linflow(
        tmp.path(),
        &[
            "verify",
            "--out",
            "f",
            "--steps",
            "1000",
            "--set",
            r#"checks=["landscape"]"#,
            "--set",
            "landscape.steps=1",
            "--set",
            "depth_list=[2]",
            "--set",
            "verify.seeds=1",
        ],
    );
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAIL landscape"));
    assert!(stderr(&o).contains("landscape"));
}
