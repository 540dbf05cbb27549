//! Browser bindings. Every export returns a JSON string; the functions
//! without the `wasm_` prefix are the same operations for native callers.

use hsplit::analysis::{error_scaling_factor, flow_eval_counts};
use hsplit::bench::{
    choose_mode, energy_trace, fixture_tree, run_experiment, MethodRun, ProblemKind, RunOptions, FIXTURES,
};
use hsplit::tree::NodeKind;
use hsplit::{parse_tree_config, SplittingTree};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn tree_from(source: &str) -> Result<SplittingTree, String> {
    if source.trim_start().starts_with('{') {
        parse_tree_config(source).map_err(|e| e.to_string())
    } else {
        fixture_tree(source).map_err(|e| e.to_string())
    }
}

/// Names of the shipped trees.
pub fn fixtures() -> String {
    json!(FIXTURES.iter().map(|(name, _)| *name).collect::<Vec<_>>()).to_string()
}

/// JSON text of a shipped tree.
pub fn fixture_source(name: &str) -> Result<String, String> {
    FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| text.to_string())
        .ok_or_else(|| format!("unknown tree `{name}`"))
}

/// Global error at `t_end` for each step size.
pub fn convergence(tree: &str, hs: &[f64], t_end: f64, reweight: Option<bool>) -> Result<String, String> {
    let tree = tree_from(tree)?;
    let kind = match tree.n_partitions() {
        3 => ProblemKind::RigidBody,
        4 => ProblemKind::Fpu,
        n => return Err(format!("no demo problem has {n} partitions")),
    };
    let run = MethodRun::new("demo", "demo", tree).with_reweight(reweight);
    // no clock and no threads in the browser
    let opts = RunOptions { timing: false, parallel: false, ..RunOptions::new(t_end) };
    let rows = run_experiment("convergence", kind, &[run], hs, &opts).map_err(|e| e.to_string())?;
    let points: Vec<Value> =
        rows.iter().map(|r| json!({ "h": r.h, "error": r.error, "flows": r.total_flow_evals })).collect();
    Ok(json!({
        "problem": kind.name(),
        "slope": rows.first().and_then(|r| r.slope),
        "points": points,
    })
    .to_string())
}

/// Oscillatory energies of an FPU run, in columns.
pub fn energy(tree: &str, k: u32, h: f64, t_end: f64, sample_every: usize) -> Result<String, String> {
    let tree = tree_from(tree)?.with_fast_factor(k.max(1));
    let mode = choose_mode(&tree, Some(true));
    let rows = energy_trace(&tree, mode, h, t_end, sample_every).map_err(|e| e.to_string())?;
    let m = rows.first().map_or(0, |r| r.oscillatory.len());
    let oscillatory: Vec<Vec<f64>> = (0..m).map(|j| rows.iter().map(|r| r.oscillatory[j]).collect()).collect();
    Ok(json!({
        "t": rows.iter().map(|r| r.t).collect::<Vec<_>>(),
        "oscillatory": oscillatory,
        "total": rows.iter().map(|r| r.total).collect::<Vec<_>>(),
        "hamiltonian": rows.iter().map(|r| r.hamiltonian).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Validation result, per-node counts and error scaling factors. Invalid
/// trees give `{"valid": false, "error": ...}` rather than an error.
pub fn tree_report(source: &str) -> String {
    let tree = match tree_from(source) {
        Ok(t) => t,
        Err(e) => return json!({ "valid": false, "error": e }).to_string(),
    };
    let counts = flow_eval_counts(&tree);
    let nodes: Vec<Value> = tree
        .nodes()
        .iter()
        .map(|n| {
            let method = match &n.kind {
                NodeKind::Inner { scheme, .. } => scheme.name.clone(),
                NodeKind::LeafExact => "exact".to_string(),
                NodeKind::LeafNumeric { stepper, .. } => stepper.name().to_string(),
            };
            json!({
                "id": n.id.0,
                "depth": tree.depth(n.id),
                "subset": n.subset.to_string(),
                "method": method,
                "k": n.multirate_factor,
                "calls": counts[n.id.0],
                "scale_p1": error_scaling_factor(&tree, n.id, 1).ok(),
                "scale_p2": error_scaling_factor(&tree, n.id, 2).ok(),
            })
        })
        .collect();
    json!({
        "valid": true,
        "partitions": tree.n_partitions(),
        "self_adjoint": tree.is_self_adjoint(),
        "nodes": nodes,
    })
    .to_string()
}

#[wasm_bindgen(js_name = fixtures)]
pub fn wasm_fixtures() -> String {
    fixtures()
}

#[wasm_bindgen(js_name = fixtureSource)]
pub fn wasm_fixture_source(name: &str) -> Result<String, JsValue> {
    fixture_source(name).map_err(|e| JsValue::from_str(&e))
}

/// `reweight`: "on", "off", or anything else for the tree's default.
#[wasm_bindgen(js_name = convergence)]
pub fn wasm_convergence(tree: &str, hs: Vec<f64>, t_end: f64, reweight: &str) -> Result<String, JsValue> {
    let reweight = match reweight {
        "on" => Some(true),
        "off" => Some(false),
        _ => None,
    };
    convergence(tree, &hs, t_end, reweight).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = energy)]
pub fn wasm_energy(tree: &str, k: u32, h: f64, t_end: f64, sample_every: usize) -> Result<String, JsValue> {
    energy(tree, k, h, t_end, sample_every).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = treeReport)]
pub fn wasm_tree_report(source: &str) -> String {
    tree_report(source)
}
