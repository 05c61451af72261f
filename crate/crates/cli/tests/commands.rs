use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value as Json;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persuasion-lab"))
        .args(args)
        .env("PERSUASION_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> Json {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Json {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON document")
}

#[test]
fn solve_reports_the_value_series() {
    let out = lab(&["solve", "--instance", "four_experiments", "--steps", "3"]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["v"], serde_json::json!(["0/1", "2/3", "5/6", "11/12"]));
    assert_eq!(doc["v_inf"], "1/1");
    assert_eq!(doc["settings"]["tolerances"]["value_eps"], 1e-9);
}

#[test]
fn solve_on_the_unreachable_center() {
    let out = lab(&[
        "solve",
        "--instance",
        "triangle_f1",
        "--steps",
        "2",
        "--depth-limit",
        "12",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["v_inf"], "0/1");
}

#[test]
fn trivial_instance_keeps_the_utility() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trivial.json");
    let doc = serde_json::json!({
        "states": ["L", "R"],
        "prior": ["1/4", "3/4"],
        "utility": {"kind": "point_indicator", "points": [["1/4", "3/4"]]},
        "experiments": []
    });
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = lab(&["solve", "--instance", path.to_str().unwrap(), "--steps", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["v_inf"], "1/1");
}

#[test]
fn truncation_with_certification_exits_3() {
    let out = lab(&[
        "solve",
        "--instance",
        "entropy_halving",
        "--depth-limit",
        "2",
        "--certify",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let out = lab(&["solve", "--instance", "entropy_halving", "--depth-limit", "2"]);
    assert!(out.status.success());
}

#[test]
fn malformed_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = persuasion_core::corpus::source("four_experiments")
        .unwrap()
        .replacen("\"1/2\"", "\"1/5\"", 1);
    std::fs::write(&path, text).unwrap();
    let out = lab(&["solve", "--instance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = lab(&["solve", "--instance", "four_experiments", "--value-eps", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn policy_round_trips_and_simulates() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("policy.json");
    let report = dir.path().join("report.json");
    let out = lab(&[
        "policy",
        "--instance",
        "four_experiments",
        "--out",
        policy.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc = read(&policy);
    assert_eq!(doc["rho"].as_array().unwrap().len(), 2);
    assert_eq!(read(&report)["status"], "exists");
    let inst = persuasion_core::corpus::four_experiments();
    let p = persuasion_core::MarkovPolicy::from_json(&doc, &inst.prior).unwrap();
    assert_eq!(p.rho[&inst.prior], inst.experiments[0]);

    let args = |seed: &'static str| {
        lab(&[
            "simulate",
            "--instance",
            "four_experiments",
            "--policy",
            policy.to_str().unwrap(),
            "--runs",
            "2000",
            "--seed",
            seed,
        ])
    };
    let a = args("7");
    assert!(a.status.success());
    assert_eq!(a.stdout, args("7").stdout);
    assert_eq!(stdout_json(&a)["report"]["mean"], 1.0);
}

#[test]
fn no_optimum_exits_5_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = lab(&[
        "policy",
        "--instance",
        "triangle_f2",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    let doc = read(&report);
    assert_eq!(doc["status"], "does not exist (resolution-relative)");
    assert!(doc["report"]["obstruction"].is_string());
}

#[test]
fn certify_accepts_the_upper_bound_and_rejects_v1() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    std::fs::write(&g, r#"{"constant": "1"}"#).unwrap();
    let out = lab(&["certify", "--instance", "four_experiments", "--g", g.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["accepted"], true);

    std::fs::write(
        &g,
        r#"{"values": [{"belief": ["1/3", "2/3"], "value": "2/3"}, {"belief": ["2/3", "1/3"], "value": "2/3"}], "default": "1"}"#,
    )
    .unwrap();
    let out = lab(&["certify", "--instance", "four_experiments", "--g", g.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stdout_json(&out)["accepted"], false);

    std::fs::write(&g, r#"{"values": []}"#).unwrap();
    let out = lab(&["certify", "--instance", "four_experiments", "--g", g.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_embeds_settings_and_stamps() {
    let out = lab(&["analyze", "--instance", "four_experiments", "--eps", "1/10,0.001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["eps"], serde_json::json!(["1/10", "1/1000"]));
    assert_eq!(doc["report"]["agree"], true);
    assert!(doc["report"]["stamp"].is_null());
    let out = lab(&["analyze", "--instance", "four_experiments", "--eps", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_formats() {
    let out = lab(&[
        "export",
        "--instance",
        "triangle_f1",
        "--depth-limit",
        "4",
        "--steps",
        "2",
    ]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    let nodes = doc["nodes"].as_array().unwrap();
    let center = &nodes[0];
    assert_eq!(center["belief"], serde_json::json!(["1/3", "1/3", "1/3"]));
    assert!((center["xy"][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(center["values"].as_array().unwrap().len(), 3);

    let dot = lab(&["export", "--instance", "four_experiments", "--format", "dot"]);
    let text = String::from_utf8(dot.stdout).unwrap();
    assert!(text.starts_with("digraph beliefs {"));
    assert!(text.contains("v_inf = 1"));

    let csv = lab(&[
        "export",
        "--instance",
        "four_experiments",
        "--format",
        "csv",
        "--steps",
        "1",
    ]);
    let text = String::from_utf8(csv.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "id,depth,p0,p1,x,y,v0,v1,v_inf");
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = lab(&[
            "analyze",
            "--instance",
            "triangle_f1",
            "--depth-limit",
            "8",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 2);
}

#[test]
fn corpus_list_and_perturbed_run() {
    let out = lab(&["corpus", "list"]);
    let names = String::from_utf8(out.stdout).unwrap();
    assert_eq!(names.lines().count(), 4);

    let dir = tempfile::tempdir().unwrap();
    assert!(lab(&["corpus", "write", "--out", dir.path().to_str().unwrap()])
        .status
        .success());
    let path = dir.path().join("four_experiments.json");
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replacen("\"1/2\"", "\"1/5\"", 1);
    std::fs::write(&path, text).unwrap();
    let out = lab(&[
        "corpus",
        "run-all",
        "--corpus-dir",
        dir.path().to_str().unwrap(),
        "--cases",
        "5",
    ]);
    assert_ne!(out.status.code(), Some(0));
    let report = String::from_utf8(out.stdout).unwrap();
    let first = report.lines().next().unwrap();
    assert!(first.starts_with("FAIL criterion 1"), "{first}");
    assert!(
        first.contains("weights sum to") || first.contains("expectation"),
        "{first}"
    );
}
