use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointmeasure"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn statuses(report: &Value) -> Vec<(String, String)> {
    report["entries"][0]["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| (v["condition"].as_str().unwrap().to_string(), v["status"].as_str().unwrap().to_string()))
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CHSH: &str = r#"{"factors":[2,2,2,2],"maximal_contexts":[[0,2],[0,3],[1,2],[1,3]]}"#;

#[test]
fn pr_box_verdicts() {
    let out = run(&["check", "--condition", "all", "@pr-box"]);
    assert_eq!(out.status.code(), Some(0));
    let got = statuses(&json(&out));
    let want = [
        ("jpm", "INFEASIBLE"),
        ("jqm", "FEASIBLE"),
        ("spjqm", "INFEASIBLE"),
        ("spjqmb", "INFEASIBLE"),
        ("q1", "INFEASIBLE"),
        ("q1ab", "INFEASIBLE"),
    ];
    for (c, s) in want {
        assert!(got.contains(&(c.to_string(), s.to_string())), "{c}: {got:?}");
    }
    let report = json(&out);
    assert_eq!(report["entries"][0]["audit"]["violations"].as_array().unwrap().len(), 0);
    assert!(report["entries"][0]["provenance"]["jpm"].as_object().unwrap().len() >= 2);
}

#[test]
fn uniform_file_is_classical() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"scenario":{CHSH},"probs":{{"[0,2]":[0.25,0.25,0.25,0.25],"[0,3]":[0.25,0.25,0.25,0.25],"[1,2]":[0.25,0.25,0.25,0.25],"[1,3]":[0.25,0.25,0.25,0.25]}}}}"#
    );
    let f = write(dir.path(), "uniform.json", &text);
    let out = run(&["check", "--condition", "jpm", &f]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(statuses(&json(&out)), vec![("jpm".to_string(), "FEASIBLE".to_string())]);
}

#[test]
fn signalling_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"scenario":{CHSH},"probs":{{"[0,2]":[0.5,0,0,0.5],"[0,3]":[1,0,0,0],"[1,2]":[0.5,0,0,0.5],"[1,3]":[0.5,0,0,0.5]}}}}"#
    );
    let f = write(dir.path(), "signalling.json", &text);
    let out = run(&["check", &f]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("signal"), "{err}");
    assert_eq!(run(&["validate", &f]).status.code(), Some(1));
    assert_eq!(run(&["validate", "@pr-box"]).status.code(), Some(0));
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.json", "{\"scenario\": {\"factors\": [2,2],\n \"maximal_contexts\": [[0,1]]},\n \"probs\": {\"[0,1]\": [0.5, }}");
    let out = run(&["check", &f]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let f = write(dir.path(), "unknown.json", r#"{"scenario":{"factors":[2],"maximal_contexts":[[0]],"extra":1},"probs":{}}"#);
    let out = run(&["check", &f]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));
}

#[test]
fn undecided_exits_two() {
    let out = run(&["check", "--condition", "spjqm", "--max-iters", "1", "@singlet"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(statuses(&json(&out))[0].1, "UNDECIDED");
}

#[test]
fn reports_are_byte_stable() {
    let args = ["check", "--condition", "all", "@pr-box", "@isotropic=0.6", "@uniform"];
    let a = run(&args);
    let b = run(&args);
    let mut parallel = args.to_vec();
    parallel.extend(["--jobs", "4"]);
    let c = run(&parallel);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn output_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&["check", "--condition", "jpm", "@uniform", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["entries"][0]["verdicts"][0]["status"], "FEASIBLE");
}

#[test]
fn jpm_bound_is_the_classical_chsh_value() {
    let out = run(&["bound", "--family", "isotropic", "--condition", "jpm"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["results"][0];
    assert!((r["chsh"].as_f64().unwrap() - 2.0).abs() < 1e-3, "{r}");
    assert!((r["lambda_star"].as_f64().unwrap() - 0.5).abs() < 1e-3);
}

#[test]
fn singlet_model_evaluation() {
    let out = run(&["model-eval", "@singlet", "--witness", "spjqm"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert!((r["chsh"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-9);
    assert_eq!(r["spjqm_witness"]["verified"], true);
}

#[test]
fn model_file_needs_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "m.json", r#"{"dimension":1,"state":[[1,0]],"projectors":[]}"#);
    let out = run(&["model-eval", &f]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compose_uniform_behaviours_and_positive_matrices() {
    let out = run(&["compose", "--behaviour", "@uniform", "--behaviour", "@uniform"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    for table in r["behaviour"]["probs"].as_object().unwrap().values() {
        let t = table.as_array().unwrap();
        assert_eq!(t.len(), 16);
        assert!(t.iter().all(|v| (v.as_f64().unwrap() - 1.0 / 16.0).abs() < 1e-15));
    }
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"rows":[[0.5,0.5],[0.5,0.5]]}"#);
    let b = write(dir.path(), "b.json", r#"{"rows":[[0.7,-0.2],[-0.2,0.3]]}"#);
    let out = run(&["compose", "--matrix", &a, "--matrix", &b]);
    assert_eq!(out.status.code(), Some(0));
    let m = &json(&out)["matrix"];
    assert_eq!(m["size"], 4);
    assert!(m["min_eigenvalue"].as_f64().unwrap() >= -1e-10);
    assert_eq!(m["strongly_positive"], true);
}

#[test]
fn chsh_branching_inventory() {
    let out = run(&["branch", "@chsh"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["branching_measurements"], 33);
    // (+1,+1 | x=0,y=0) against (-1,+1 | x=0,y=1)
    let x = serde_json::json!({"measurement": [0, 2], "labels": [0, 0]});
    let y = serde_json::json!({"measurement": [0, 3], "labels": [1, 0]});
    let found = r["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| (p["x"] == x && p["y"] == y) || (p["x"] == y && p["y"] == x));
    assert!(found);
    assert_eq!(run(&["branch", "@chsh"]).stdout, out.stdout);
}

#[test]
fn incompatible_scenario_has_only_trivial_branchings() {
    let out = run(&["branch", "@bell=1,3,2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["proper_branching"], 0);
}

#[test]
fn sampling_probe_reports_open_inclusions() {
    let args = ["check", "--condition", "all", "--sample", "4", "--seed", "9"];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["entries"].as_array().unwrap().len(), 4);
    let probe = r["gap_probe"].as_array().unwrap();
    assert_eq!(probe.len(), 2);
    assert_eq!(probe[0]["outer"], "spjqm");
    assert_eq!(probe[0]["inner"], "spjqmb");
    assert_eq!(run(&args).stdout, out.stdout);
}
