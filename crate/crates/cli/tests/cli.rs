use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn advlq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advlq"))
        .args(args)
        .current_dir(dir)
        .env("ADVLQ_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) {
    let o = advlq(args, dir);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn code(args: &[&str], dir: &Path) -> i32 {
    advlq(args, dir).status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn column(csv_text: &str, name: &str) -> Vec<Option<f64>> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].parse().ok())
        .collect()
}

/// Reruns a command from its sidecar and compares the named outputs byte
/// for byte.
fn rerun_matches(dir: &Path, first: &str, command: &str, files: &[&str]) {
    let meta = json(&dir.join(first).join(format!("{command}.meta.json")));
    write(dir, "again.json", &meta["spec"].to_string());
    ok(&["run", "--spec", "again.json", "--out", "again"], dir);
    let again = json(&dir.join("again").join(format!("{command}.meta.json")));
    assert_eq!(meta["config_sha256"], again["config_sha256"]);
    for f in files {
        let a = std::fs::read(dir.join(first).join(f)).unwrap();
        let b = std::fs::read(dir.join("again").join(f)).unwrap();
        assert!(a == b, "{f} differs on rerun");
    }
}

#[test]
fn scalar_bounds_table_reproduces_from_sidecar() {
    let d = tempfile::tempdir().unwrap();
    ok(&["bounds_scalar_filter", "--out", "o"], d.path());
    let text = std::fs::read_to_string(d.path().join("o/bounds_scalar_filter.csv")).unwrap();
    let gaps: Vec<f64> = column(&text, "true_gap").into_iter().flatten().collect();
    assert_eq!(gaps.len(), 8);
    assert!(gaps.windows(2).all(|w| w[0] > w[1]), "{gaps:?}");
    rerun_matches(
        d.path(),
        "o",
        "bounds_scalar_filter",
        &["bounds_scalar_filter.csv"],
    );
}

#[test]
fn synth_report_satisfies_the_cost_identity() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "s.json", r#"{"epsilon": 0.1}"#);
    ok(&["synth", "--spec", "s.json", "--out", "o"], d.path());
    let r = json(&d.path().join("o/synth_report.json"));
    let (ac, tr, g) = (
        r["ac"].as_f64().unwrap(),
        r["soft_trace"].as_f64().unwrap(),
        r["gamma"].as_f64().unwrap(),
    );
    assert!((ac - (tr + g * g * 0.1)).abs() <= 1e-10 * ac);
    assert!((r["power"].as_f64().unwrap() - 0.1).abs() <= 1e-4);

    // The written controller evaluates to the same costs.
    write(
        d.path(),
        "e.json",
        r#"{"controller": {"file": "o/controller.json"}, "epsilon": 0.1}"#,
    );
    ok(&["evaluate", "--spec", "e.json", "--out", "e"], d.path());
    let text = std::fs::read_to_string(d.path().join("e/evaluate.csv")).unwrap();
    let nc = column(&text, "nc")[0].unwrap();
    let ac_eval = column(&text, "ac")[0].unwrap();
    assert!((nc - r["nc"].as_f64().unwrap()).abs() <= 1e-9 * nc);
    assert!((ac_eval - ac).abs() <= 1e-6 * ac);
}

#[test]
fn zero_budget_emits_the_nominal_controller() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "s.json",
        r#"{"epsilon": 0, "plant": {"builtin": {"name": "integrator", "setting": "state_feedback"}}}"#,
    );
    ok(&["synth", "--spec", "s.json", "--out", "o"], d.path());
    let r = json(&d.path().join("o/synth_report.json"));
    assert!(r["gamma"].is_null());
    assert_eq!(r["ac"], r["nc"]);
    let k = json(&d.path().join("o/controller.json"));
    assert_eq!(k["A_K"].as_array().unwrap().len(), 0);
}

#[test]
fn builtin_plant_json_feeds_back_in() {
    let d = tempfile::tempdir().unwrap();
    let o = advlq(&["builtin", "integrator"], d.path());
    assert!(o.status.success());
    std::fs::write(d.path().join("plant.json"), &o.stdout).unwrap();
    write(
        d.path(),
        "s.json",
        r#"{"gamma": 20, "plant": {"file": "plant.json"}}"#,
    );
    ok(&["synth", "--spec", "s.json", "--out", "o"], d.path());
    let r = json(&d.path().join("o/synth_report.json"));
    assert_eq!(r["mode"], "output_feedback");
    assert_eq!(r["inner_converged"], true);
    let meta = json(&d.path().join("o/synth.meta.json"));
    assert!(
        meta["spec"]["plant"]["A"].is_array(),
        "plant file is inlined"
    );
}

#[test]
fn tradeoff_rows_are_monotone_and_independent_of_jobs() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "t.json",
        r#"{"settings": ["state_feedback", "prediction"], "rhos": [0.5], "eps": {"linspace": [0, 0.1, 4]}}"#,
    );
    ok(&["tradeoff", "--spec", "t.json", "--out", "par"], d.path());
    ok(
        &[
            "tradeoff", "--spec", "t.json", "--out", "seq", "--jobs", "1",
        ],
        d.path(),
    );
    let a = std::fs::read_to_string(d.path().join("par/tradeoff.csv")).unwrap();
    let b = std::fs::read_to_string(d.path().join("seq/tradeoff.csv")).unwrap();
    assert_eq!(a, b);
    let nc: Vec<f64> = column(&a, "nc").into_iter().map(Option::unwrap).collect();
    let ac: Vec<f64> = column(&a, "ac").into_iter().map(Option::unwrap).collect();
    for curve in 0..2 {
        let r = curve * 4..curve * 4 + 4;
        assert!(nc[r.clone()]
            .windows(2)
            .all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
        assert!(ac[r].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    }
    let s = std::fs::read_to_string(d.path().join("par/tradeoff_summary.csv")).unwrap();
    assert!(column(&s, "monotonicity_violations")
        .iter()
        .all(|v| *v == Some(0.0)));
}

#[test]
fn cartpole_traces_reproduce_from_sidecar() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.json", r#"{"l0s": [0.9], "duration": 2.0}"#);
    ok(
        &[
            "cartpole_sim",
            "--spec",
            "c.json",
            "--out",
            "o",
            "--seed",
            "7",
        ],
        d.path(),
    );
    let meta = json(&d.path().join("o/cartpole_sim.meta.json"));
    assert_eq!(meta["seed"], 7);
    let text = std::fs::read_to_string(d.path().join("o/cartpole_sim.csv")).unwrap();
    assert_eq!(column(&text, "final_running_avg").len(), 2);
    let traces = [
        "cartpole_trace_l0_0.9_lqg.csv",
        "cartpole_trace_l0_0.9_adv.csv",
    ];
    let lqg = std::fs::read_to_string(d.path().join("o").join(traces[0])).unwrap();
    assert_eq!(lqg.lines().count(), 51);
    rerun_matches(d.path(), "o", "cartpole_sim", &traces);
}

#[test]
fn exit_codes_classify_failures() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write(p, "bad.json", "{ not json");
    assert_eq!(code(&["synth", "--spec", "bad.json"], p), 2);
    write(p, "kind.json", r#"{"kind": "plot"}"#);
    assert_eq!(code(&["run", "--spec", "kind.json"], p), 2);
    write(p, "empty.json", r#"{"cs": []}"#);
    assert_eq!(
        code(&["bounds_scalar_filter", "--spec", "empty.json"], p),
        2
    );
    write(p, "both.json", r#"{"epsilon": 0.1, "gamma": 3}"#);
    assert_eq!(code(&["synth", "--spec", "both.json"], p), 2);
    assert_eq!(code(&["tradeoff", "--tol", "0"], p), 2);
    assert_eq!(code(&["frobnicate"], p), 2);
    write(
        p,
        "l0.json",
        r#"{"epsilon": 0.1, "plant": {"builtin": {"name": "cartpole", "l0": 1.0}}}"#,
    );
    assert_eq!(code(&["synth", "--spec", "l0.json"], p), 3);
    write(
        p,
        "unstabilizable.json",
        r#"{"gamma": 5, "plant": {"A": [[2.0]], "B0": [[1.0]], "B1": [[1.0]], "B2": [[0.0]],
            "C2": [[1.0]], "D20": [[0.0]], "D21": [[0.0]], "Q": [[1.0]], "R": [[1.0]]}}"#,
    );
    assert!(matches!(
        code(&["synth", "--spec", "unstabilizable.json"], p),
        3 | 4
    ));
}
