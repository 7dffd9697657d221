use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tljtower")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn build_a2_is_trivial() {
    let out = run(&["build", "A2", "--depth", "4"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["dims"], serde_json::json!([1, 1, 1, 1, 1]));
}

#[test]
fn verify_a3_passes_and_is_deterministic() {
    let a = run(&["verify", "A3", "--depth", "6", "--seed", "4"]);
    let b = run(&["verify", "A3", "--depth", "6", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["seed"], 4);
}

#[test]
fn embed_a3_passes() {
    let out = run(&["embed", "A3", "-n", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let checks = json(&out)["checks"].as_array().unwrap().clone();
    assert!(checks.iter().all(|c| c["max_residual"].as_f64().unwrap() < 1e-9));
}

#[test]
fn graph_file_input_and_outputs() {
    let dir = std::env::temp_dir().join(format!("tljtower-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let graph = dir.join("a3.json");
    std::fs::write(&graph, r#"{"even":["v0","v2"],"odd":["v1"],"edges":[["v0","v1",1],["v2","v1",1]],"basepoint":"v0"}"#)
        .unwrap();
    let (out_path, dot_path) = (dir.join("principal.json"), dir.join("principal.dot"));
    let out = run(&[
        "principal",
        graph.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--dot",
        dot_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert_eq!(v["isomorphic_to_input"], true);
    assert_eq!(v["finite_depth"], 3);
    assert!(std::fs::read_to_string(&dot_path).unwrap().starts_with("graph"));
    let fp = run(&["fp", graph.to_str().unwrap()]);
    assert!((json(&fp)["modulus"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn failing_check_is_named() {
    let out = run(&["verify", "A3", "--depth", "5", "--tolerance", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().last().unwrap().starts_with("first failing check: "));
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(run(&["verify", "Z9"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "A3", "--tolerance", "0"]).status.code(), Some(2));
}

#[test]
fn projcat_and_gpa_and_invariance_pass() {
    for args in [
        vec!["projcat", "A3", "--depth", "6", "--samples", "2"],
        vec!["gpa", "E6", "-n", "3"],
        vec!["invariance", "A3", "--r1", "1", "--r2", "2", "--basepoint", "v2"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
