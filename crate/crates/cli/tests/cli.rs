use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nonholo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonholo")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const LINEAR: &str = r#"{
  "system": { "scenario": "lda_linear" },
  "integrator": { "method": "rk4", "dt": 1e-2, "t_end": 1.0 },
  "outputs": { "csv": "out/run.csv", "report": "out/run.jsonl" },
  "checks": [
    { "kind": "analytic-compare", "tolerance": 1e-8 },
    { "kind": "drift", "tolerance": 1e-10 }
  ]
}"#;

#[test]
fn simulate_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", LINEAR);
    let o = nonholo(&["simulate", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("check analytic-compare PASS"));

    let csv = fs::read_to_string(dir.path().join("out/run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# tool: nonholo"));
    assert!(lines[1].starts_with("# config_sha256: "));
    assert!(lines[2].starts_with("# multiplier_convention: "));
    assert!(lines[3].starts_with("# projection: off"));
    assert_eq!(lines[4], "t,q1,q2,q3,v1,v2,v3,D_1,h_1,gram_min_eig");
    assert_eq!(lines.len(), 5 + 101);

    let report = json_lines(&fs::read_to_string(dir.path().join("out/run.jsonl")).unwrap());
    assert_eq!(report[0]["record"], "metadata");
    assert_eq!(report[1]["record"], "run");
    assert_eq!(report[1]["termination"]["status"], "completed");
    assert_eq!(report.len(), 4);
}

#[test]
fn hamiltonian_writes_extended_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "h.json",
        r#"{
          "system": { "scenario": "friction" },
          "initial": { "e0": 2.0, "mu_e": "0.3*cos(t)" },
          "integrator": { "dt": 1e-2, "t_end": 0.5 },
          "outputs": { "csv": "h.csv" }
        }"#,
    );
    let o = nonholo(&["hamiltonian", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let header = csv.lines().nth(4).unwrap();
    assert!(header.ends_with("p1,p2,p3,pi1,pi2,pi3,e,pi_e,surface_residual,mu_e"), "{header}");
}

#[test]
fn dimension_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"system": {"n": 2, "masses": [1, 1], "potential": "q1^2"}, "initial": {"q0": [0, 0], "v0": [0]},
            "integrator": {"t_end": 1}}"#,
    );
    let o = nonholo(&["simulate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial.v0"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_unknown_command() {
    assert_eq!(nonholo(&["simulate", "/nonexistent/run.json"]).status.code(), Some(2));
    assert_eq!(nonholo(&["fly"]).status.code(), Some(2));
    assert_eq!(nonholo(&["sleigh", "lda_linear", "--bogus", "1"]).status.code(), Some(2));
}

#[test]
fn off_surface_start_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "off.json", r#"{"system": {"scenario": "lda_linear"}, "initial": {"v0": [0, 1, 1]}}"#);
    let o = nonholo(&["simulate", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial"));
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strict.json",
        r#"{"system": {"scenario": "lda_linear"}, "integrator": {"dt": 1e-2, "t_end": 1.0},
            "checks": [{"kind": "drift", "tolerance": 1e-18}, {"kind": "analytic-compare", "tolerance": 1e-14}]}"#,
    );
    let o = nonholo(&["simulate", &cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn verify_reports_gauge_and_stationarity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.json",
        r#"{"system": {"scenario": "lda_linear"}, "initial": {"e0": 1.5, "mu_e": "sin(3*t)"},
            "integrator": {"dt": 1e-2, "t_end": 1.0},
            "checks": [{"kind": "gauge-invariance"}, {"kind": "action-stationarity"},
                       {"kind": "hamiltonian-equivalence", "tolerance": 1e-8, "e0": [0.5], "mu_e": ["sin(t)"]}]}"#,
    );
    let o = nonholo(&["verify", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let records = json_lines(&stdout(&o));
    assert_eq!(records[0]["record"], "metadata");
    let gauge = &records[2];
    assert_eq!(gauge["kind"], "gauge-invariance");
    assert!(gauge["details"]["fitted_first_order"].as_f64().unwrap().abs() < 1e-4);
    let stationarity = &records[3];
    assert_eq!(stationarity["pass"], true);
    let equivalence = &records[4];
    assert_eq!(equivalence["details"]["cases"].as_array().unwrap().len(), 3);
    assert!(equivalence["value"].as_f64().unwrap() < 1e-8);
}

#[test]
fn damped_oscillator_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "osc.json",
        r#"{"system": {"scenario": "damped_oscillator", "params": {"omega": 2.0, "k": 0.5}},
            "initial": {"q0": [1.0], "v0": [0.0]},
            "integrator": {"dt": 1e-3, "t_end": 5.0},
            "checks": [{"kind": "analytic-compare", "tolerance": 1e-9}]}"#,
    );
    let o = nonholo(&["simulate", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
}

#[test]
fn list_scenarios_prints_all_five() {
    let o = nonholo(&["list-scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o).lines().collect::<Vec<_>>(),
        ["friction", "lda_linear", "lda_nonlinear", "vakonomic_phi", "damped_oscillator"]
    );
}

#[test]
fn sleigh_sweep_keeps_argument_order() {
    let o = nonholo(&["sleigh", "friction", "--k", "20", "--k", "2", "--t-end", "1", "--dt", "1e-2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("k=20 "));
    assert!(lines[1].contains("k=2 "));

    let o = nonholo(&["sleigh", "lda_linear", "--dt", "1e-2"]);
    let line = stdout(&o);
    let dev: f64 = line.split("max_circle_deviation=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(dev < 1e-8, "{line}");
}

#[test]
fn nonlinear_sleigh_stops_on_its_guard() {
    let o = nonholo(&["sleigh", "lda_nonlinear", "--t-end", "3", "--dt", "1e-3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("termination=event:v1-vanishing@1.560796"), "{}", stdout(&o));
    // a coarse step loses the constraint first and the drift guard halts the run
    let o = nonholo(&["sleigh", "lda_nonlinear", "--t-end", "3", "--dt", "1e-2"]);
    assert!(stdout(&o).contains("termination=event:drift"), "{}", stdout(&o));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", LINEAR);
    let read = || {
        assert_eq!(nonholo(&["simulate", &cfg]).status.code(), Some(0));
        fs::read(dir.path().join("out/run.csv")).unwrap()
    };
    assert_eq!(read(), read());
}
