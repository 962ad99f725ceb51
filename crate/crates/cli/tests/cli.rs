use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn formation(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formation"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_octahedron_passes() {
    let out = formation(&["validate-graph", "--config", path_str(&scenario("octahedron.json"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("ok: 6 agents, 12 edges"));
}

#[test]
fn validate_reversed_edge_names_the_clause() {
    let out = formation(&["validate-graph", "--config", path_str(&scenario("reversed-edge.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("clause (ii)"), "{}", stdout(&out));
}

#[test]
fn malformed_json_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"version\": 1, graph: }").unwrap();
    let out = formation(&["validate-graph", "--config", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("malformed scenario"), "{}", stderr(&out));

    let missing = dir.path().join("absent.json");
    let out = formation(&["derive-targets", "--config", path_str(&missing)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn octahedron_targets() {
    let out = formation(&["derive-targets", "--config", path_str(&scenario("octahedron.json"))]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let eta3 = v["eta3_star"].as_f64().unwrap();
    assert!((eta3 + 2f64.sqrt().ln()).abs() < 1e-12, "{eta3}");
    assert!((v["xi3_star"].as_f64().unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    assert_eq!(v["d21_star"].as_f64(), Some(1.0));
    for a in 4..=6 {
        assert!(v[format!("phi{a}_star")].is_number());
    }
}

#[test]
fn tetrahedron_dihedral_target() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("targets.json");
    let out = formation(&[
        "derive-targets",
        "--config",
        path_str(&scenario("tetrahedron.json")),
        "--out",
        path_str(&path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let phi4 = v["phi4_star"].as_f64().unwrap();
    assert!((phi4 - (1.0f64 / 3.0).acos()).abs() < 1e-12, "{phi4}");
}

#[test]
fn zero_volume_is_rejected() {
    let out = formation(&["derive-targets", "--config", path_str(&scenario("zero-volume.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("zero desired volume"), "{}", stderr(&out));
}

#[test]
fn simulate_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("nested/run");
    let out = formation(&[
        "simulate",
        "--config",
        path_str(&scenario("octahedron.json")),
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let csv = fs::read_to_string(out_dir.join("octahedron.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["t", "x1", "y1", "z1"]);
    assert_eq!(header[19], "e_d");
    assert_eq!(&header[20..22], ["e_xi_3", "e_eta_3"]);
    assert_eq!(&header[22..25], ["e_xi_4", "e_eta_4", "e_phi_4"]);
    assert_eq!(header.last(), Some(&"min_dist"));
    assert_eq!(header.len(), 1 + 18 + 1 + 2 + 3 * 3 + 5 + 1);
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 401);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert_eq!(rows.last().unwrap()[0], 20.0);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("octahedron.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 6);
    assert_eq!(summary["rows"], 401);
    let last = rows.last().unwrap();
    let max_err = last[19..31].iter().fold(0.0f64, |m, e| m.max(e.abs()));
    assert!((summary["max_abs_error"].as_f64().unwrap() - max_err).abs() <= 1e-15 * max_err.max(1.0));
    assert!(summary["events"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["kind"] == "scale"));
}

#[test]
fn json_lines_carry_the_csv_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = path_str(&scenario("tetrahedron.json")).to_owned();
    let run = |format: &str| {
        let out = formation(&[
            "simulate",
            "--config",
            &config,
            "--out",
            path_str(dir.path()),
            "--format",
            format,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    };
    run("csv");
    run("json");
    let csv = fs::read_to_string(dir.path().join("tetrahedron.csv")).unwrap();
    let jsonl = fs::read_to_string(dir.path().join("tetrahedron.jsonl")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let csv_rows: Vec<&str> = lines.collect();
    let json_rows: Vec<Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(csv_rows.len(), json_rows.len());
    for (c, j) in csv_rows.iter().zip(&json_rows) {
        let keys: Vec<&String> = j.as_object().unwrap().keys().collect();
        assert_eq!(keys, header);
        for (name, cell) in header.iter().zip(c.split(',')) {
            assert_eq!(cell.parse::<f64>().unwrap(), j[*name].as_f64().unwrap(), "{name}");
        }
    }
}

#[test]
fn seed_and_step_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = path_str(&scenario("tetrahedron.json")).to_owned();
    let out = formation(&[
        "simulate",
        "--config",
        &config,
        "--out",
        path_str(dir.path()),
        "--seed",
        "11",
        "--dt",
        "0.01",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("tetrahedron.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["dt"], 0.01);

    let out = formation(&[
        "simulate",
        "--config",
        &config,
        "--out",
        path_str(dir.path()),
        "--dt",
        "-1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = formation(&[
        "simulate",
        "--config",
        path_str(&scenario("tetrahedron.json")),
        "--out",
        path_str(&blocker.join("sub")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot create"), "{}", stderr(&out));
}

#[test]
fn check_suites_report_pass_counts() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = formation(&[
        "check",
        "geometry",
        "--seed",
        "7",
        "--samples",
        "500",
        "--out",
        path_str(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("properties passed (seed 7)"));
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v[0]["suite"], "geometry");

    let out = formation(&["check", "lemma1", "--pairs", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn check_all_passes_at_seed_seven() {
    let out = formation(&["check", "all", "--seed", "7"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("4/4 suites passed"), "{text}");
    assert!(text.contains("montecarlo: "));
    assert!(text.contains("trials converged"));
}
