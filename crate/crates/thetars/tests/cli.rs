use std::process::{Command, Output};

use serde_json::Value;

fn thetars(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thetars")).args(args).env_remove("THETA_RS_CACHE").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn compute_bgw() {
    let out = thetars(&["compute", "--r", "2", "--s", "1", "--g", "1", "--n", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["entries"][0]["value"], "1/8");
    assert_eq!(v["entries"][0]["a"], serde_json::json!([1]));
    assert_eq!(v["meta"]["command"], "compute");
    assert!(v["meta"]["tool_version"].is_string());
}

#[test]
fn compute_csv() {
    let out = thetars(&["compute", "--r", "3", "--s", "1", "--g", "1", "--n", "2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a_1,a_2,k_1,k_2,value"));
    assert!(lines.count() > 0);
}

#[test]
fn empty_table() {
    let out = thetars(&["compute", "--r", "3", "--s", "2", "--g", "0", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["entries"], serde_json::json!([]));
}

#[test]
fn usage_errors() {
    for args in [
        &["compute", "--r", "1", "--s", "1", "--g", "1", "--n", "1"][..],
        &["compute", "--r", "3", "--s", "3", "--g", "1", "--n", "1"],
        &["omega", "--r", "3", "--s", "1", "--g", "0", "--n", "2"],
        &["verify", "routes", "--r", "4", "--s", "2"],
        &["verify", "nonsense", "--r", "2", "--s", "1"],
        &["compute", "--r", "2"],
    ] {
        assert_eq!(thetars(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn omega_and_potential() {
    let out = thetars(&["omega", "--r", "2", "--s", "1", "--g", "1", "--n", "1"]);
    let v = json(&out);
    assert_eq!(v["entries"][0]["m"], serde_json::json!([1]));
    assert_eq!(v["entries"][0]["value"], "-1/16");
    let out = thetars(&["zpotential", "--r", "2", "--s", "1", "--order", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let f11 = v["entries"].as_array().unwrap().iter().find(|e| e["g"] == 1 && e["n"] == 1).unwrap();
    assert_eq!(f11["value"], "1/8");
}

#[test]
fn verify_suites() {
    let out = thetars(&["verify", "indexsets", "--r", "7", "--s", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["verdicts"][0]["detail"].as_str().unwrap().contains("[1, 2, 5]"));
    for suite in ["wavefunctions", "kernels", "loops", "wconstraints", "string", "routes", "reconstruct"] {
        let out = thetars(&["verify", suite, "--r", "3", "--s", "1"]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(json(&out)["verdicts"].as_array().unwrap().iter().all(|x| x["passed"] == true));
    }
}

#[test]
fn cache_and_out() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out1 = dir.path().join("a.json");
    let out2 = dir.path().join("b.json");
    let args = |o: &std::path::Path| {
        vec!["table", "--r", "3", "--s", "1", "--g", "1", "--n", "2", "--cache", cache.to_str().unwrap(), "--out", o.to_str().unwrap()]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let a1 = args(&out1);
    let a1: Vec<&str> = a1.iter().map(|s| s.as_str()).collect();
    assert_eq!(thetars(&a1).status.code(), Some(0));
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
    let a2 = args(&out2);
    let a2: Vec<&str> = a2.iter().map(|s| s.as_str()).collect();
    assert_eq!(thetars(&a2).status.code(), Some(0));
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}
