//! JSON tree configuration.
//!
//! ```json
//! { "n": 3,
//!   "root": { "scheme": "yoshida9",
//!             "left": { "leaf": 1, "flow": "exact" },
//!             "right": { "subset": [2, 3], "scheme": "strang", "k": 1,
//!                        "left": { "leaf": 2, "flow": "exact" },
//!                        "right": { "leaf": 3, "flow": { "scheme": "rk4", "order": 4 } } } } }
//! ```
//!
//! Errors carry the path of the offending node, e.g. `root.right.left`.

use serde_json::{json, Map, Value};

use crate::schemes::{builtin_scheme, LeafStepper};
use crate::tree::{LeafFlow, NodeSpec, SplittingTree, SubsetMask, TreeError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Syntax(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: unknown scheme `{name}`")]
    UnknownScheme { path: String, name: String },
    #[error("{}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("scheme `{0}` has no registered name and cannot be serialized")]
    Unserializable(String),
}

fn format_err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Format { path: path.to_string(), message: message.into() }
}

pub fn parse_tree_config(text: &str) -> Result<SplittingTree, ConfigError> {
    let doc: Value = serde_json::from_str(text)?;
    let obj = doc.as_object().ok_or_else(|| format_err("$", "expected an object"))?;
    check_keys(obj, "$", &["n", "root"])?;
    let n = obj.get("n").ok_or_else(|| format_err("$", "missing `n`"))?;
    let n = as_index(n, "n")?;
    let root = obj.get("root").ok_or_else(|| format_err("$", "missing `root`"))?;
    let mut paths = Vec::new();
    let spec = parse_node(root, "root".to_string(), &mut paths)?;
    match SplittingTree::build(n, spec) {
        Ok(tree) => Ok(tree),
        Err(TreeError::Invalid(violations)) => Err(ConfigError::Invalid(
            violations
                .iter()
                .map(|v| format!("{}: {}", paths.get(v.node.0).map_or("root", String::as_str), v.rule))
                .collect(),
        )),
        Err(e) => Err(ConfigError::Invalid(vec![e.to_string()])),
    }
}

// `paths` receives the node paths in the preorder used by `SplittingTree::build`.
fn parse_node(v: &Value, path: String, paths: &mut Vec<String>) -> Result<NodeSpec, ConfigError> {
    let obj = v.as_object().ok_or_else(|| format_err(&path, "expected an object"))?;
    paths.push(path.clone());
    let k = match obj.get("k") {
        Some(k) => {
            u32::try_from(as_index(k, &format!("{path}.k"))?).map_err(|_| format_err(&path, "`k` out of range"))?
        }
        None => 1,
    };
    if let Some(leaf) = obj.get("leaf") {
        check_keys(obj, &path, &["leaf", "flow", "k"])?;
        let partition = as_index(leaf, &format!("{path}.leaf"))?;
        let flow = match obj.get("flow") {
            None => return Err(format_err(&path, "missing `flow`")),
            Some(Value::String(s)) if s == "exact" => LeafFlow::Exact,
            Some(Value::Object(f)) => {
                let fpath = format!("{path}.flow");
                check_keys(f, &fpath, &["scheme", "order"])?;
                let name = f
                    .get("scheme")
                    .and_then(Value::as_str)
                    .ok_or_else(|| format_err(&fpath, "missing `scheme` string"))?;
                let stepper: LeafStepper = name
                    .parse()
                    .map_err(|_| ConfigError::UnknownScheme { path: fpath.clone(), name: name.to_string() })?;
                let order = match f.get("order") {
                    Some(o) => u32::try_from(as_index(o, &format!("{fpath}.order"))?)
                        .map_err(|_| format_err(&fpath, "`order` out of range"))?,
                    None => stepper.order(),
                };
                LeafFlow::Numeric { stepper, order }
            }
            Some(_) => return Err(format_err(&path, "`flow` must be \"exact\" or {\"scheme\", \"order\"}")),
        };
        return Ok(NodeSpec::Leaf { partition, flow, k });
    }

    check_keys(obj, &path, &["subset", "scheme", "k", "left", "right"])?;
    let name = obj
        .get("scheme")
        .and_then(Value::as_str)
        .ok_or_else(|| format_err(&path, "inner node needs a `scheme` string (or `leaf` for a leaf)"))?;
    let scheme =
        builtin_scheme(name).map_err(|_| ConfigError::UnknownScheme { path: path.clone(), name: name.to_string() })?;
    let subset = match obj.get("subset") {
        None => None,
        Some(Value::Array(items)) => {
            let spath = format!("{path}.subset");
            let mut indices = Vec::with_capacity(items.len());
            for item in items {
                let m = as_index(item, &spath)?;
                if !(1..=64).contains(&m) {
                    return Err(format_err(&spath, format!("partition {m} outside 1..=64")));
                }
                indices.push(m);
            }
            Some(SubsetMask::from_indices(indices))
        }
        Some(_) => return Err(format_err(&path, "`subset` must be an array")),
    };
    let left = obj.get("left").ok_or_else(|| format_err(&path, "missing `left`"))?;
    let right = obj.get("right").ok_or_else(|| format_err(&path, "missing `right`"))?;
    let left = parse_node(left, format!("{path}.left"), paths)?;
    let right = parse_node(right, format!("{path}.right"), paths)?;
    Ok(NodeSpec::Inner { scheme, subset, k, left: Box::new(left), right: Box::new(right) })
}

fn check_keys(obj: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<(), ConfigError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(format_err(path, format!("unexpected key `{k}`"))),
        None => Ok(()),
    }
}

fn as_index(v: &Value, path: &str) -> Result<usize, ConfigError> {
    v.as_u64().and_then(|n| usize::try_from(n).ok()).ok_or_else(|| format_err(path, "expected a non-negative integer"))
}

/// Serializes a tree into the configuration format. Inner subsets are
/// always written.
pub fn tree_to_value(tree: &SplittingTree) -> Result<Value, ConfigError> {
    Ok(json!({ "n": tree.n_partitions(), "root": node_value(&tree.to_spec())? }))
}

pub fn tree_to_json(tree: &SplittingTree) -> Result<String, ConfigError> {
    Ok(serde_json::to_string_pretty(&tree_to_value(tree)?)?)
}

fn node_value(spec: &NodeSpec) -> Result<Value, ConfigError> {
    Ok(match spec {
        NodeSpec::Leaf { partition, flow, k } => {
            let flow = match flow {
                LeafFlow::Exact => json!("exact"),
                LeafFlow::Numeric { stepper, order } => json!({ "scheme": stepper.name(), "order": order }),
            };
            json!({ "leaf": partition, "flow": flow, "k": k })
        }
        NodeSpec::Inner { scheme, subset, k, left, right } => {
            match builtin_scheme(&scheme.name) {
                Ok(b) if b == *scheme => {}
                _ => return Err(ConfigError::Unserializable(scheme.name.clone())),
            }
            let mut obj = Map::new();
            if let Some(s) = subset {
                obj.insert("subset".into(), json!(s.indices().collect::<Vec<_>>()));
            }
            obj.insert("scheme".into(), json!(scheme.name));
            obj.insert("k".into(), json!(k));
            obj.insert("left".into(), node_value(left)?);
            obj.insert("right".into(), node_value(right)?);
            Value::Object(obj)
        }
    })
}
