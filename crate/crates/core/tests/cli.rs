use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(mode: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poroade"))
        .args([mode, "--quiet", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn check_reports_a_well_posed_material() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("check", &scenario("check.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty(), "quiet prints nothing");
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["report"]["holds"], Value::Bool(true));
    assert_eq!(report["advisories"].as_array().unwrap().len(), 1);
    assert_eq!(report["convolution_form_margins"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("config.json").exists());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn check_prints_a_table_unless_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_poroade"))
        .args(["check", "--config"])
        .arg(scenario("check.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("holds") && text.contains("c_min"), "{text}");
}

#[test]
fn compare_summary_has_gap_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("compare", &scenario("compare.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&dir.path().join("summary.json"));
    assert!(s["max_diff"].as_f64().unwrap() > 0.0);
    assert!(s["observed_order"].as_f64().unwrap() >= 0.9);
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("level,dt,max_diff,order"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn ade_run_writes_trajectory_state_and_operators() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("run-ade", &scenario("run-ade.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert!(lines.next().unwrap().starts_with("t,energy,"));
    assert_eq!(lines.count(), 50);
    let side = json(&dir.path().join("final_state.json"));
    let values = std::fs::read_to_string(dir.path().join("final_state.txt")).unwrap();
    assert_eq!(values.lines().count() as u64, side["length"].as_u64().unwrap());
    for name in ["grad", "div", "grad_v", "div_v", "sym_grad", "sym_div"] {
        let text = std::fs::read_to_string(dir.path().join("operators").join(format!("{name}.txt"))).unwrap();
        let header: Vec<usize> = text.lines().next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(header[2], text.lines().count() - 1);
    }
    let s = json(&dir.path().join("summary.json"));
    assert!(s["stability"]["ratio"].as_f64().unwrap() <= 2.0);
}

#[test]
fn conv_run_writes_the_same_trajectory_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("run-conv", &scenario("run-conv.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("t,energy,p[0]@(0.5)"));
    assert!(dir.path().join("final_state.json").exists());
}

#[test]
fn fit_mms_and_transfer_complete() {
    let dir = tempfile::tempdir().unwrap();
    for (mode, file) in [("fit", "fit.json"), ("mms", "mms.json"), ("transfer", "transfer.json")] {
        let out = dir.path().join(mode);
        let o = run(mode, &scenario(file), &out);
        assert_eq!(o.status.code(), Some(0), "{mode}: {}", stderr(&o));
    }
    let fit = json(&dir.path().join("fit/summary.json"));
    assert!(fit["residual"].as_f64().unwrap() < 1e-10);
    let series = std::fs::read_to_string(dir.path().join("fit/series.json")).unwrap();
    let s = poroade::permeability::PermeabilitySeries::from_json(&series).unwrap();
    assert!((s.terms()[1].c - 2.0).abs() < 1e-6);
    let mms = json(&dir.path().join("mms/summary.json"));
    for o in mms["orders"].as_array().unwrap() {
        assert!((o.as_f64().unwrap() - 2.0).abs() < 0.2);
    }
    let tr = json(&dir.path().join("transfer/summary.json"));
    assert!(tr["max_rel_err"].as_f64().unwrap() < 1e-3);
    assert_eq!(tr["frequencies"], 11);
}

#[test]
fn outputs_are_deterministic() {
    let base = std::fs::read_to_string(scenario("run-ade.json")).unwrap();
    let text = base.replace(
        r#""initial": {"kind": "mode", "v": 0.1, "p": 1.0}"#,
        r#""initial": {"kind": "random", "seed": 42, "amplitude": 1.0}"#,
    );
    assert_ne!(text, base);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("random.json");
    std::fs::write(&cfg, text).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run("run-ade", &cfg, &a).status.code(), Some(0));
    assert_eq!(run("run-ade", &cfg, &b).status.code(), Some(0));
    for f in ["trajectory.csv", "final_state.txt", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn echoed_config_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert_eq!(run("transfer", &scenario("transfer.json"), &first).status.code(), Some(0));
    let second = dir.path().join("second");
    let o = run("transfer", &first.join("config.json"), &second);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("summary.json")).unwrap(),
        std::fs::read(second.join("summary.json")).unwrap()
    );
}

fn config_error(text: &str, mode: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, text).unwrap();
    let o = run(mode, &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    stderr(&o)
}

#[test]
fn malformed_config_exits_2_with_line_and_column() {
    let err = config_error("{\n  \"version\": 1,\n  \"grid\": {\"dim\": 1,,}\n}\n", "check");
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let base = std::fs::read_to_string(scenario("check.json")).unwrap();
    let err = config_error(&base.replace("\"nu0\"", "\"nu_0\""), "check");
    assert!(err.contains("bad.json:") && err.contains("nu_0"), "{err}");
}

#[test]
fn missing_block_and_bad_values_point_at_their_line() {
    let base = std::fs::read_to_string(scenario("compare.json")).unwrap();
    let err = config_error(&base.replace("[0.01, 0.005, 0.0025]", "[0.01, 0.005]"), "compare");
    let line = base.lines().position(|l| l.contains("\"dts\"")).unwrap() + 1;
    assert!(err.contains(&format!("bad.json:{line}:")), "{err}");
    let err = config_error(&base, "mms");
    assert!(err.contains("\"mms\""), "{err}");
    let err = config_error(&base.replace("\"theta\": 1.0", "\"theta\": 0.2"), "run-ade");
    assert!(err.contains("theta"), "{err}");
}

#[test]
fn resolution_guard_is_a_config_error() {
    let base = std::fs::read_to_string(scenario("transfer.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(scenario("series.json"), dir.path().join("series.json")).unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, base.replace("\"omegas\": [0.0]", "\"omegas\": [0.0], \"dt\": 0.01")).unwrap();
    let o = run("transfer", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("omega * dt"));
}

#[test]
fn indefinite_mass_is_a_runtime_failure() {
    let base = std::fs::read_to_string(scenario("run-ade.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("singular.json");
    // c F/(d η) = 0.06 < 1/ρ
    std::fs::write(&cfg, base.replace(r#"{"c": 0.2, "d": 0.5}"#, r#"{"c": 0.01, "d": 0.5}"#)).unwrap();
    let o = run("run-ade", &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("not positive definite"));
}

#[test]
fn mode_mismatch_and_missing_config_are_rejected() {
    let base = std::fs::read_to_string(scenario("check.json")).unwrap();
    let err = config_error(&base.replacen("\"version\": 1,", "\"version\": 1, \"mode\": \"fit\",", 1), "check");
    assert!(err.contains("mode fit"), "{err}");
    let o = Command::new(env!("CARGO_BIN_EXE_poroade")).arg("check").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
