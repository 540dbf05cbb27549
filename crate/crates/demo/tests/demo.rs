use hsplit_demo::{convergence, energy, fixture_source, fixtures, tree_report};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn lists_and_serves_fixtures() {
    let names = parse(&fixtures());
    let names: Vec<&str> = names.as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(names.contains(&"fpu_homf4") && names.contains(&"rigid_leaf_first_yoshida9"));
    let text = fixture_source("five_strang").unwrap();
    assert!(text.contains("\"strang\""));
    assert!(fixture_source("nope").is_err());
}

#[test]
fn rigid_body_study() {
    let out = parse(&convergence("rigid_pair_first_yoshida7", &[0.2, 0.1, 0.05, 0.025], 100.0, None).unwrap());
    assert_eq!(out["problem"], "rigid-body");
    let slope = out["slope"].as_f64().unwrap();
    assert!((1.75..=2.25).contains(&slope), "{slope}");
    assert_eq!(out["points"].as_array().unwrap().len(), 4);
}

#[test]
fn convergence_accepts_inline_json() {
    let src = fixture_source("rigid_chain_strang").unwrap();
    let out = parse(&convergence(&src, &[0.1, 0.05, 0.025], 10.0, None).unwrap());
    assert!((out["slope"].as_f64().unwrap() - 2.0).abs() < 0.3);
    assert!(convergence("five_strang", &[0.1], 1.0, None).is_err());
}

#[test]
fn energy_columns() {
    let out = parse(&energy("fpu_homf4", 10, 1.0 / 7.0, 1.0, 1).unwrap());
    let t = out["t"].as_array().unwrap();
    assert_eq!(t.len(), 8);
    assert_eq!(out["oscillatory"].as_array().unwrap().len(), 3);
    assert!((out["total"][0].as_f64().unwrap() - 1.0).abs() < 1e-15);
    assert!(energy("rigid_chain_strang", 1, 0.1, 1.0, 1).is_err());
}

#[test]
fn report_for_valid_and_invalid_trees() {
    let out = parse(&tree_report("five_strang"));
    assert_eq!(out["valid"], true);
    assert_eq!(out["self_adjoint"], true);
    let calls: Vec<u64> = out["nodes"].as_array().unwrap().iter().map(|n| n["calls"].as_u64().unwrap()).collect();
    assert_eq!(calls.iter().max(), Some(&8));

    let bad = parse(&tree_report(r#"{"n": 2, "root": {"leaf": 1, "flow": "exact"}}"#));
    assert_eq!(bad["valid"], false);
    assert!(bad["error"].as_str().unwrap().len() > 3);
}
