use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use twophase::scenario::parse_scenario;

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("twophase-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn twophase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twophase")).args(args).output().unwrap()
}

fn column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_shipped_scenarios() {
    for entry in fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        let out = twophase(&["validate", path_str(&path)]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_scenario_exit_code() {
    let dir = scratch("invalid");
    let text = fs::read_to_string(scenario("segregation.json")).unwrap();
    let bad = dir.join("bad.json");
    fs::write(&bad, text.replace("\"phi\": 0.2", "\"phi\": 1.5")).unwrap();
    assert_eq!(twophase(&["validate", path_str(&bad)]).status.code(), Some(2));
    fs::write(&bad, text.replace("\"rho_o\"", "\"rho_oil\"")).unwrap();
    let out = twophase(&["validate", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho_oil"));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(twophase(&[]).status.code(), Some(1));
    assert_eq!(twophase(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(twophase(&["run", "/nonexistent/scenario.json"]).status.code(), Some(1));
}

#[test]
fn run_writes_decreasing_energy_series() {
    let dir = scratch("run");
    let out = twophase(&["run", path_str(&scenario("segregation.json")), "--out", path_str(&dir), "--t-end", "2e5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let series = fs::read_to_string(dir.join("series.csv")).unwrap();
    let e = column(&series, "E");
    assert!(e.len() > 2);
    let tol = 1e-9 * e[0].abs().max(1.0);
    assert!(e.windows(2).all(|w| w[1] <= w[0] + tol));
    let t = column(&series, "t");
    assert!((t.last().unwrap() - 2e5).abs() < 1e-6);
    assert!(dir.join("snapshot_000000.csv").exists());
    assert!(dir.join("snapshot_000000.vtk").exists());
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn audit_passes_on_equilibrium() {
    let dir = scratch("audit");
    let out = twophase(&["audit", path_str(&scenario("equilibrium.json")), "--out", path_str(&dir), "--t-end", "1e5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = fs::read_to_string(dir.join("violations.csv")).unwrap();
    assert_eq!(v.trim(), "step,kind,magnitude");
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn thread_count_does_not_change_results() {
    let mut files = Vec::new();
    for threads in ["1", "3"] {
        let dir = scratch(&format!("threads{threads}"));
        let out = twophase(&[
            "run",
            path_str(&scenario("random.json")),
            "--out",
            path_str(&dir),
            "--t-end",
            "1e4",
            "--seed",
            "7",
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        files.push(fs::read(dir.join("series.csv")).unwrap());
        fs::remove_dir_all(dir).unwrap();
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn oracle_writes_profile() {
    let dir = scratch("oracle");
    let out = twophase(&["oracle", path_str(&scenario("equilibrium.json")), "--out", path_str(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("oracle.csv")).unwrap();
    let s = column(&text, "s_o_equilibrium");
    assert_eq!(s.len(), 40);
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn scenarios_round_trip_through_json() {
    for entry in fs::read_dir(scenario("")).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        let s = parse_scenario(&text).unwrap();
        assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
    }
}
