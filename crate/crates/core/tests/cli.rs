use gfl_core::cli::{main_with, EXIT_CONFIG, EXIT_DIAGNOSTIC, EXIT_OK, EXIT_SOLVER};
use std::fs;
use std::path::Path;
use tempfile::TempDir;

fn gfl(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with(std::iter::once("gfl").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn scenario(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUADRATIC: &str = r#"
system = "quadratic"
T = 1.0
N = 20
u0 = [1.0]
diagnostics = ["edb", "edi", "evi", "contractivity"]

[params]
n = 1.0
"#;

#[test]
fn run_writes_csv_and_json() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "q.toml", QUADRATIC);
    let out = dir.path().join("out");
    let (code, stdout, stderr) = gfl(&["run", &file, "--out", path(&out)]);
    assert_eq!(code, EXIT_OK, "{stdout}{stderr}");
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,u_0,energy,slope,speed,step_increment,edi_cum_residual"));
    assert_eq!(lines.count(), 21);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    let names: Vec<&str> = report["diagnostics"].as_array().unwrap().iter().map(|d| d["name"].as_str().unwrap()).collect();
    for n in ["edb", "edi", "evi", "contractivity"] {
        assert!(names.contains(&n), "{names:?}");
    }
    let u_end = report["trajectory"]["final_state"][0].as_f64().unwrap();
    assert!((u_end - 1.05f64.powi(-20)).abs() < 1e-13);
}

#[test]
fn runs_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "q.toml", QUADRATIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(gfl(&["run", &file, "--out", path(&a)]).0, EXIT_OK);
    assert_eq!(gfl(&["run", &file, "--out", path(&b)]).0, EXIT_OK);
    for f in ["trajectory.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn eris_toy_matches_its_oracle() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "e.toml", "system = \"eris_toy\"\nT = 2.0\nN = 40\ndiagnostics = [\"stability\", \"tims\"]\noracle_tolerance = 1e-12\n");
    let out = dir.path().join("out");
    let (code, stdout, _) = gfl(&["run", &file, "--out", path(&out)]);
    assert_eq!(code, EXIT_OK, "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["oracle_error"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn zero_steps_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "z.toml", "system = \"quadratic\"\nT = 1.0\nN = 0\n");
    let (code, _, stderr) = gfl(&["run", &file, "--out", path(&dir.path().join("o"))]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(stderr.contains("N"), "{stderr}");
}

#[test]
fn parse_errors_name_the_line_and_field() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "p.toml", "system = \"quadratic\"\nT = 1.0\nsteps = 4\n");
    let (code, _, stderr) = gfl(&["run", &file]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(stderr.contains(":3"), "{stderr}");
    assert!(stderr.contains("steps"), "{stderr}");
}

#[test]
fn unknown_system_and_bad_tau_are_rejected() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "u.toml", "system = \"nope\"\nT = 1.0\nN = 4\n");
    assert_eq!(gfl(&["run", &file]).0, EXIT_CONFIG);
    let file = scenario(&dir, "t.toml", "system = \"quadratic\"\nT = 1.0\ntaus = [0.3]\n[params]\nn = 1.0\n");
    assert_eq!(gfl(&["run", &file]).0, EXIT_CONFIG);
    let file = scenario(&dir, "d.toml", "system = \"quadratic\"\nT = 1.0\nN = 2\nu0 = [1.0, 2.0, 3.0]\n");
    assert_eq!(gfl(&["run", &file]).0, EXIT_CONFIG);
}

#[test]
fn solver_failures_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "f.toml", "system = \"fp_jko\"\nT = 0.1\nN = 2\nu0 = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]\n");
    let (code, _, stderr) = gfl(&["run", &file, "--out", path(&dir.path().join("o"))]);
    assert!(code == EXIT_SOLVER || code == EXIT_CONFIG, "{code}: {stderr}");
}

#[test]
fn a_hard_tolerance_miss_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let body = format!("oracle_tolerance = 1e-12\n{QUADRATIC}");
    let file = scenario(&dir, "h.toml", &body);
    let (code, stdout, _) = gfl(&["run", &file, "--out", path(&dir.path().join("o"))]);
    assert_eq!(code, EXIT_DIAGNOSTIC, "{stdout}");
    assert!(stdout.contains("FAIL"));
}

#[test]
fn sweeps_fit_an_order() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "s.toml", "system = \"quadratic\"\nT = 1.0\nN = 10\nu0 = [1.0]\n[params]\nn = 1.0\n");
    let out = dir.path().join("sweep");
    let (code, stdout, stderr) = gfl(&["sweep", &file, "--param", "tau", "--values", "1/10,1/20,1/40,1/80", "--out", path(&out)]);
    assert_eq!(code, EXIT_OK, "{stdout}{stderr}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let order = json["table"]["order"].as_f64().unwrap();
    assert!((order - 1.0).abs() < 0.1, "{order}");
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 5);

    let (code, stdout, _) = gfl(&["sweep", &file, "--param", "tau", "--values", "0.1", "--out", path(&out)]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("fitted order: n/a"), "{stdout}");
}

#[test]
fn check_entries_run_without_a_trajectory() {
    let dir = TempDir::new().unwrap();
    let file = scenario(&dir, "c.toml", "system = \"polar_check\"\n");
    let out = dir.path().join("out");
    assert_eq!(gfl(&["run", &file, "--out", path(&out)]).0, EXIT_OK);
    assert!(out.join("report.json").exists());
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn list_systems_and_usage_errors() {
    let (code, stdout, _) = gfl(&["list-systems"]);
    assert_eq!(code, EXIT_OK);
    for id in ["quadratic", "nonsmooth_r2", "eris_toy", "wiggly", "fp_jko"] {
        assert!(stdout.lines().any(|l| l.starts_with(id)), "{id}");
    }
    assert_eq!(gfl(&["frobnicate"]).0, EXIT_CONFIG);
    assert_eq!(gfl(&["--help"]).0, EXIT_OK);
}
