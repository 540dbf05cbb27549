//! Leading-error scaling factors, closed-form evaluation counts, multirate
//! factor bounds and empirical order fits.

use crate::engine::reweighted_factor;
use crate::tree::{path_info, NodeId, NodeKind, SplittingTree, TreeError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("need at least 3 points for an order fit, got {0}")]
    TooFewPoints(usize),
    #[error("{hs} step sizes but {errors} errors")]
    LengthMismatch { hs: usize, errors: usize },
    #[error("point {index} is not positive and finite (h = {h}, error = {error})")]
    NonPositive { index: usize, h: f64, error: f64 },
    #[error("all step sizes are equal")]
    DegenerateSteps,
    #[error("h_min must be positive and finite, got {0}")]
    InvalidStepSize(f64),
    #[error("orders must be at least 1")]
    ZeroOrder,
}

/// Scalar multiplying the intrinsic leading error of one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorScaling {
    pub node: NodeId,
    pub order_p: u32,
    pub factor: f64,
}

/// Least-squares line through `(log h, log error)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// `prod_{w on the path to v} sum_j c_j^{p+1}` where `c_j` runs over the
/// coefficients of `w` on the side leading to `v`.
///
/// Multirate factors are ignored; the root gives 1.
pub fn error_scaling_factor(tree: &SplittingTree, v: NodeId, p: u32) -> Result<f64, AnalysisError> {
    let info = path_info(tree, v)?;
    let q = p as i32 + 1;
    Ok(info
        .inner_path
        .iter()
        .zip(&info.delta)
        .map(|(&w, &left)| {
            let scheme = tree.node(w).scheme().expect("path consists of inner nodes");
            scheme.side(left).iter().map(|c| c.powi(q)).sum::<f64>()
        })
        .product())
}

/// Multirate counterpart of [`error_scaling_factor`]:
/// the sum over all coefficient tuples on the path of
/// `(prod c)^{p+1} / (prod kt)^p`, where the factors `kt` of the nodes below
/// the root (including `v`) are the ones the engine uses for that tuple.
pub fn mr_error_scaling_factor(tree: &SplittingTree, v: NodeId, p: u32, reweight: bool) -> Result<f64, AnalysisError> {
    let info = path_info(tree, v)?;
    let mut path = info.inner_path.clone();
    path.push(v);
    Ok(mr_sum(tree, &path, &info.delta, 0, 1.0, 1.0, 1.0, p, reweight))
}

#[allow(clippy::too_many_arguments)]
fn mr_sum(
    tree: &SplittingTree,
    path: &[NodeId],
    delta: &[bool],
    depth: usize,
    c: f64,
    coef: f64,
    denom: f64,
    p: u32,
    reweight: bool,
) -> f64 {
    let u = path[depth];
    let node = tree.node(u);
    let kt = if u == tree.root() || matches!(node.kind, NodeKind::LeafExact) {
        1
    } else if reweight {
        reweighted_factor(c, node.multirate_factor)
    } else {
        u64::from(node.multirate_factor)
    } as f64;
    let denom = denom * kt;
    if depth + 1 == path.len() {
        return coef.powi(p as i32 + 1) / denom.powi(p as i32);
    }
    let scheme = node.scheme().expect("path consists of inner nodes");
    scheme
        .side(delta[depth])
        .iter()
        .filter(|&&a| a != 0.0)
        .map(|&a| mr_sum(tree, path, delta, depth + 1, a * c / kt, coef * a, denom, p, reweight))
        .sum()
}

/// Singlerate scaling factors of every inner and numeric-leaf node.
pub fn error_scaling_table(tree: &SplittingTree, p: u32) -> Vec<ErrorScaling> {
    tree.nodes()
        .iter()
        .filter(|n| !matches!(n.kind, NodeKind::LeafExact))
        .map(|n| ErrorScaling {
            node: n.id,
            order_p: p,
            factor: error_scaling_factor(tree, n.id, p).expect("node belongs to the tree"),
        })
        .collect()
}

/// Applications of each node's method during one singlerate step, indexed by
/// node id: the product over the ancestors of the number of nonzero
/// coefficients on the side taken.
pub fn flow_eval_counts(tree: &SplittingTree) -> Vec<u64> {
    let mut counts = vec![0; tree.len()];
    fill_counts(tree, tree.root(), 1, &mut counts);
    counts
}

fn fill_counts(tree: &SplittingTree, v: NodeId, n: u64, counts: &mut [u64]) {
    counts[v.0] = n;
    let node = tree.node(v);
    if let (Some((l, r)), Some(scheme)) = (node.children(), node.scheme()) {
        fill_counts(tree, l, n * scheme.nonzero(true) as u64, counts);
        fill_counts(tree, r, n * scheme.nonzero(false) as u64, counts);
    }
}

/// Smallest multirate factor that lets a node of order `p_node` keep pace
/// with a root of order `p_root` for all `h >= h_min`:
/// `h_min^{(p_node - p_root) / p_node}`, or 1 when `p_root <= p_node`.
pub fn min_multirate_factor(p_node: u32, p_root: u32, h_min: f64) -> Result<f64, AnalysisError> {
    if p_node == 0 || p_root == 0 {
        return Err(AnalysisError::ZeroOrder);
    }
    if !(h_min > 0.0 && h_min.is_finite()) {
        return Err(AnalysisError::InvalidStepSize(h_min));
    }
    if p_root <= p_node {
        return Ok(1.0);
    }
    Ok(h_min.powf((f64::from(p_node) - f64::from(p_root)) / f64::from(p_node)))
}

/// Fits `log(error) = slope * log(h) + intercept`.
pub fn estimate_order(hs: &[f64], errors: &[f64]) -> Result<OrderFit, AnalysisError> {
    if hs.len() != errors.len() {
        return Err(AnalysisError::LengthMismatch { hs: hs.len(), errors: errors.len() });
    }
    if hs.len() < 3 {
        return Err(AnalysisError::TooFewPoints(hs.len()));
    }
    for (index, (&h, &error)) in hs.iter().zip(errors).enumerate() {
        if !(h > 0.0 && error > 0.0 && h.is_finite() && error.is_finite()) {
            return Err(AnalysisError::NonPositive { index, h, error });
        }
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateSteps);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(OrderFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Integrator, Mode};
    use crate::presets::{self, FpuMethod, RootPlacement};
    use crate::problems::{FpuProblem, RigidBody};
    use crate::schemes::{triple_jump_weights, BuiltinScheme};
    use crate::tree::SubsetMask;

    fn gammas() -> (f64, f64, f64) {
        let g = triple_jump_weights();
        (g.gamma()[0], g.gamma()[1], g.gamma()[2])
    }

    #[test]
    fn composed_root_cancels_cubic_terms() {
        let (g1, g2, g3) = gammas();
        let tree = presets::rigid_body_tree(RootPlacement::PairFirst, BuiltinScheme::Yoshida9);
        let pair = tree.find_subset(SubsetMask::from_indices([2, 3])).unwrap();
        let f = error_scaling_factor(&tree, pair, 2).unwrap();
        let closed = 2.0 * (g1 / 2.0).powi(3) + 2.0 * (g2 / 2.0).powi(3) + 2.0 * (g3 / 2.0).powi(3);
        assert!(f.abs() < 1e-13 && closed.abs() < 1e-13, "{f} {closed}");
    }

    #[test]
    fn merged_root_keeps_cubic_terms() {
        let (g1, g2, g3) = gammas();
        let tree = presets::rigid_body_tree(RootPlacement::PairFirst, BuiltinScheme::Yoshida7);
        let pair = tree.find_subset(SubsetMask::from_indices([2, 3])).unwrap();
        let f = error_scaling_factor(&tree, pair, 2).unwrap();
        let expanded = (g1 / 2.0).powi(3) + ((g1 + g2) / 2.0).powi(3) + ((g2 + g3) / 2.0).powi(3) + (g3 / 2.0).powi(3);
        let factored = 0.375 * (g1 * g1 * g2 + g1 * g2 * g2 + g2 * g2 * g3 + g2 * g3 * g3);
        assert!((f - expanded).abs() < 1e-13);
        assert!((f - factored).abs() < 1e-13);
        assert!(f.abs() > 0.1);
    }

    #[test]
    fn unit_coefficient_paths_give_one() {
        let tree = presets::chain_tree(4, BuiltinScheme::LieTrotter.scheme());
        for n in tree.nodes() {
            for p in 1..5 {
                assert_eq!(error_scaling_factor(&tree, n.id, p).unwrap(), 1.0);
            }
        }
        assert_eq!(error_scaling_factor(&tree, tree.root(), 3).unwrap(), 1.0);
        assert!(error_scaling_factor(&tree, NodeId(99), 1).is_err());
    }

    #[test]
    fn five_partition_counts() {
        let tree = presets::five_partition_tree(BuiltinScheme::Strang.scheme());
        let counts = flow_eval_counts(&tree);
        assert_eq!(counts[tree.leaf_of(1).unwrap().0], 8);
        assert_eq!(counts[tree.leaf_of(5).unwrap().0], 4);
        assert_eq!(counts[tree.leaf_of(3).unwrap().0], 2);
        assert_eq!(counts[tree.leaf_of(2).unwrap().0], 2);
        assert_eq!(counts[tree.leaf_of(4).unwrap().0], 1);
        assert_eq!(counts[tree.root().0], 1);
    }

    #[test]
    fn counts_match_engine() {
        let p = RigidBody::default();
        for s in BuiltinScheme::ALL {
            let tree = presets::rigid_body_tree(RootPlacement::LeafFirst, s);
            let mut it = Integrator::new(&tree, &p, Mode::Singlerate).unwrap();
            let mut x = p.initial_state();
            it.step(&mut x, 0.1).unwrap();
            assert_eq!(it.counters().node_calls, flow_eval_counts(&tree));
        }
    }

    #[test]
    fn unit_factors_reduce_to_singlerate() {
        for s in BuiltinScheme::ALL {
            let tree = presets::five_partition_tree(s.scheme());
            for n in tree.nodes() {
                for p in 1..=4 {
                    let a = error_scaling_factor(&tree, n.id, p).unwrap();
                    for reweight in [false, true] {
                        let b = mr_error_scaling_factor(&tree, n.id, p, reweight).unwrap();
                        // yoshida coefficients exceed 1 and are subdivided by reweighting
                        if !reweight || s != BuiltinScheme::Yoshida9 && s != BuiltinScheme::Yoshida7 {
                            assert!((a - b).abs() < 1e-13, "{s:?} {} {p}: {a} {b}", n.id);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fast_node_factor_scaling() {
        let tree = presets::fpu_tree_with(
            BuiltinScheme::Strang.scheme(),
            BuiltinScheme::Strang.scheme(),
            BuiltinScheme::Strang.scheme(),
            1,
        );
        let hf = tree.find_subset(SubsetMask::from_indices([2, 3])).unwrap();
        let t10 = tree.with_factor(hf, 10).unwrap();
        let naive = mr_error_scaling_factor(&t10, hf, 2, false).unwrap()
            / mr_error_scaling_factor(&tree, hf, 2, false).unwrap();
        assert!((naive - 0.01).abs() < 1e-10, "{naive}");
        // every sub-step of H^f has |c| = 1/2, so kt = ceil(5) = 5 instead of 1
        let rw =
            mr_error_scaling_factor(&t10, hf, 2, true).unwrap() / mr_error_scaling_factor(&tree, hf, 2, true).unwrap();
        assert!((rw - 1.0 / 25.0).abs() < 1e-10, "{rw}");
    }

    #[test]
    fn mr_factor_matches_engine_trace() {
        let p = FpuProblem::default();
        for m in FpuMethod::ALL {
            for k in [1, 3, 10] {
                let tree = presets::fpu_tree(m, k);
                for reweight in [false, true] {
                    let mut it = Integrator::new(&tree, &p, Mode::Multirate { reweight }).unwrap().with_trace();
                    let mut x = p.initial_state();
                    it.step(&mut x, 1.0).unwrap();
                    for n in tree.nodes() {
                        for q in [1, 2, 4] {
                            let oracle: f64 =
                                it.trace().iter().filter(|c| c.node == n.id).map(|c| c.step.powi(q as i32 + 1)).sum();
                            let f = mr_error_scaling_factor(&tree, n.id, q, reweight).unwrap();
                            if n.is_leaf() && matches!(n.kind, NodeKind::LeafExact) {
                                continue;
                            }
                            assert!((f - oracle).abs() < 1e-12 * oracle.abs().max(1.0), "{m} k={k} {}", n.id);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn multirate_bound() {
        assert!((min_multirate_factor(2, 4, 0.01).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(min_multirate_factor(2, 2, 0.01).unwrap(), 1.0);
        assert_eq!(min_multirate_factor(4, 2, 0.01).unwrap(), 1.0);
        assert!((min_multirate_factor(2, 4, 1.0 / 56.0).unwrap() - 56.0).abs() < 1e-9);
        assert!(min_multirate_factor(2, 4, 0.0).is_err());
        assert!(min_multirate_factor(0, 4, 0.1).is_err());
    }

    #[test]
    fn order_fit() {
        let hs = [0.2, 0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        let fit = estimate_order(&hs, &errs).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-10);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(estimate_order(&hs[..2], &errs[..2]), Err(AnalysisError::TooFewPoints(2)));
        assert!(matches!(estimate_order(&hs, &[1.0, 0.0, 1.0, 1.0]), Err(AnalysisError::NonPositive { index: 1, .. })));
        assert!(estimate_order(&[0.1, 0.1, 0.1], &[1.0, 2.0, 3.0]).is_err());
        assert!(estimate_order(&hs, &errs[..3]).is_err());
    }
}
