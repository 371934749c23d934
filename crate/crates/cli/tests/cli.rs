use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn verify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verify")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
name = "small"
fixture = "CURV3"
identities = ["fiber.exactness", "connection.invariants", "metricity.total", "transport.f_drift"]

[sampling]
count = 4
"#;

#[test]
fn list_names_fixtures_and_identities() {
    let out = verify(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["FLAT3", "CURV3", "SPHERE3", "riemannian-control", "metricity.deflected_g", "angle.geodesic"] {
        assert!(text.contains(needle), "missing {needle}");
    }
}

#[test]
fn unknown_identity_exits_2_and_names_it() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", "name = \"bad\"\nfixture = \"FLAT3\"\nidentities = [\"nonexistent\"]\n");
    let out = verify(&["run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));
}

#[test]
fn unknown_fixture_exits_2_and_names_it() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", "name = \"bad\"\nfixture = \"TORUS9\"\n");
    let out = verify(&["run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("TORUS9"));
}

#[test]
fn malformed_configs_exit_2() {
    let dir = TempDir::new().unwrap();
    for (name, text) in [
        ("syntax.toml", "name = \n"),
        ("field.toml", "name = \"x\"\nfixture = \"FLAT3\"\nsamplng = 3\n"),
        ("both.toml", "name = \"x\"\n"),
        ("tol.toml", "name = \"x\"\nfixture = \"FLAT3\"\n[tolerances]\n\"nope.nope\" = 1.0\n"),
    ] {
        let cfg = write(&dir, name, text);
        assert_eq!(verify(&["run", s(&cfg)]).status.code(), Some(2), "{name}");
    }
    assert_eq!(verify(&["run", s(&dir.path().join("missing.toml"))]).status.code(), Some(2));
    let cfg = write(&dir, "ok.toml", SMALL);
    assert_eq!(verify(&["run", s(&cfg), "--dim", "7"]).status.code(), Some(2));
}

#[test]
fn failing_identity_exits_1() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "strict.toml",
        "name = \"strict\"\nfixture = \"CURV3\"\nidentities = [\"coincidence.hessian\"]\n[tolerances]\n\"coincidence.hessian\" = 1e-14\n[sampling]\ncount = 2\n",
    );
    let out = verify(&["run", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL coincidence.hessian"));
}

#[test]
fn report_csv_and_trace_are_written() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let (report, csv, trace) = (dir.path().join("r.json"), dir.path().join("r.csv"), dir.path().join("t.csv"));
    let out = verify(&["run", s(&cfg), "--report", s(&report), "--csv", s(&csv), "--trace", s(&trace)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let json: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["schema"], "finsler-verify-report/1");
    assert_eq!(json["passed"], true);
    assert_eq!(json["environment"]["fixture"], "CURV3");
    let ids = json["identities"].as_array().unwrap();
    assert_eq!(ids.len(), 4);
    for id in ids {
        for key in ["id", "reference", "tolerance", "worst", "passed", "samples"] {
            assert!(id.get(key).is_some(), "missing {key}");
        }
    }

    let csv = std::fs::read_to_string(&csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("identity,sample,residual,x,y"));
    // three point identities on four samples, one trajectory residual
    assert_eq!(lines.count(), 3 * 4 + 1);

    let trace = std::fs::read_to_string(&trace).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("s,F1,F2,alpha,H,H_alpha,dalpha_ds,predicted_rate"));
    assert_eq!(lines.count(), 1001);
}

fn column(trace: &str, name: &str) -> Vec<f64> {
    let mut lines = trace.lines();
    let k = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
}

#[test]
fn trace_columns_obey_the_preservation_laws() {
    let dir = TempDir::new().unwrap();
    for (fixture, col, bound) in [("CURV3-CONST", "H_alpha", 1e-6), ("FLAT3", "alpha", 1e-12), ("CURV3", "F1", 1e-6)] {
        let cfg = write(
            &dir,
            "t.toml",
            &format!("name = \"t\"\nfixture = \"{fixture}\"\nidentities = [\"fiber.exactness\"]\n[sampling]\ncount = 1\n"),
        );
        let trace = dir.path().join("t.csv");
        assert!(verify(&["run", s(&cfg), "--trace", s(&trace)]).status.success());
        let v = column(&std::fs::read_to_string(&trace).unwrap(), col);
        assert!(spread(&v) < bound, "{fixture} {col}: {}", spread(&v));
    }
}

fn without_timings(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["environment"].as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn reports_are_deterministic_and_seeded() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let paths: Vec<PathBuf> = (0..3).map(|k| dir.path().join(format!("r{k}.json"))).collect();
    verify(&["run", s(&cfg), "--report", s(&paths[0])]);
    verify(&["run", s(&cfg), "--report", s(&paths[1])]);
    verify(&["run", s(&cfg), "--report", s(&paths[2]), "--seed", "9", "--dim", "4"]);
    let (a, b, c) = (without_timings(&paths[0]), without_timings(&paths[1]), without_timings(&paths[2]));
    assert_eq!(a, b);
    assert_eq!(c["environment"]["seed"], 9);
    assert_eq!(c["environment"]["dim"], 4);
    assert_ne!(a["identities"], c["identities"]);
}

#[test]
fn builtin_riemannian_control_passes() {
    let out = verify(&["run", "riemannian-control"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
