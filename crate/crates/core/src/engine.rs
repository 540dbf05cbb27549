//! Singlerate and multirate hierarchical steps,
//! the outer integration loop and flow-evaluation accounting.

use crate::schemes::LeafStepper;
use crate::tree::{validate_tree, NodeId, NodeKind, SplittingTree, SubsetMask, TreeError};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("tree has {tree} partitions but the problem has {problem}")]
    PartitionMismatch { tree: usize, problem: usize },
    #[error("state has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no exact flow available for partition {0}")]
    MissingExactFlow(usize),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStepSize(f64),
    #[error("t_end = {t_end} is not a positive integer multiple of h = {h}")]
    NonMultipleEndTime { t_end: f64, h: f64 },
    #[error("non-finite state after step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },
}

/// An N-split system `x' = f_1(x) + ... + f_N(x)`.
///
/// Partition indices are 1-based. Implementations must be pure so that many
/// integrations can share one problem.
pub trait Problem {
    fn n_partitions(&self) -> usize;

    fn dim(&self) -> usize;

    /// Evaluates the elementary vector field `f_m` at `x`.
    fn field(&self, m: usize, x: &[f64], dx: &mut [f64]);

    /// Advances `x` by the exact `h`-flow of `f_m`.
    fn exact_flow(&self, m: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
        let _ = (h, x);
        Err(EngineError::MissingExactFlow(m))
    }

    /// One step of a numerical leaf method for `x' = f_m(x)`.
    fn numeric_step(&self, m: usize, stepper: LeafStepper, h: f64, x: &mut [f64]) {
        stepper.step(|y, dy| self.field(m, y, dy), h, x);
    }

    /// Full right-hand side `sum_m f_m(x)`.
    fn full_field(&self, x: &[f64], dx: &mut [f64]) {
        let mut tmp = vec![0.0; dx.len()];
        dx.fill(0.0);
        for m in 1..=self.n_partitions() {
            self.field(m, x, &mut tmp);
            dx.iter_mut().zip(&tmp).for_each(|(d, t)| *d += t);
        }
    }

    /// Named scalar observables (energies, invariants).
    fn observables(&self, x: &[f64]) -> Vec<(String, f64)> {
        let _ = x;
        Vec::new()
    }

    /// Partitions counted as fast in the cost model.
    fn fast_partitions(&self) -> SubsetMask {
        SubsetMask::full(self.n_partitions())
    }
}

impl<P: Problem + ?Sized> Problem for &P {
    fn n_partitions(&self) -> usize {
        (**self).n_partitions()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn field(&self, m: usize, x: &[f64], dx: &mut [f64]) {
        (**self).field(m, x, dx)
    }
    fn exact_flow(&self, m: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
        (**self).exact_flow(m, h, x)
    }
    fn numeric_step(&self, m: usize, stepper: LeafStepper, h: f64, x: &mut [f64]) {
        (**self).numeric_step(m, stepper, h, x)
    }
    fn full_field(&self, x: &[f64], dx: &mut [f64]) {
        (**self).full_field(x, dx)
    }
    fn observables(&self, x: &[f64]) -> Vec<(String, f64)> {
        (**self).observables(x)
    }
    fn fast_partitions(&self) -> SubsetMask {
        (**self).fast_partitions()
    }
}

/// How a tree is executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Plain recursive splitting; multirate factors are ignored.
    Singlerate,
    /// Multirate recursion. With `reweight` the factor of every sub-step is
    /// `ceil(|c| k)`; without it each non-exact child runs `k` sub-steps.
    Multirate { reweight: bool },
}

/// Per-run invocation counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalCounters {
    /// Applications of each node's method, indexed by node id. An inner node
    /// counts one per sweep over its coefficients.
    pub node_calls: Vec<u64>,
    /// Exact-flow or numeric-step applications per partition (index `m - 1`).
    pub leaf_flows: Vec<u64>,
    /// Vector-field evaluations by numeric leaf steppers per partition.
    pub field_evals: Vec<u64>,
}

impl EvalCounters {
    pub fn new(n_nodes: usize, n_partitions: usize) -> Self {
        EvalCounters {
            node_calls: vec![0; n_nodes],
            leaf_flows: vec![0; n_partitions],
            field_evals: vec![0; n_partitions],
        }
    }

    pub fn total_flows(&self) -> u64 {
        self.leaf_flows.iter().sum()
    }

    /// Leaf applications summed over the partitions in `subset`.
    pub fn flows_in(&self, subset: SubsetMask) -> u64 {
        subset.indices().filter_map(|m| self.leaf_flows.get(m - 1)).sum()
    }
}

/// One recorded node application: `step = coefficient * h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowCall {
    pub node: NodeId,
    /// Partition index for leaves.
    pub partition: Option<usize>,
    pub coefficient: f64,
    pub step: f64,
}

/// Smallest integer `kt` with `|c| h / kt <= h / k`; 0 when `c == 0`.
pub fn reweighted_factor(c: f64, k: u32) -> u64 {
    assert!(k >= 1, "multirate factor must be positive");
    if c == 0.0 {
        return 0;
    }
    let c = c.abs();
    let kf = f64::from(k);
    // exact ceiling of the real product |c| k: fma evaluates |c| k - n with a
    // single rounding, so its sign is exact
    let mut n = (c * kf).ceil().max(1.0);
    if c.mul_add(kf, -n) > 0.0 {
        n += 1.0;
    }
    while n > 1.0 && c.mul_add(kf, -(n - 1.0)) <= 0.0 {
        n -= 1.0;
    }
    n as u64
}

/// Executes one tree on one problem and keeps the counters.
pub struct Integrator<'a, P: Problem + ?Sized> {
    tree: &'a SplittingTree,
    problem: &'a P,
    mode: Mode,
    counters: EvalCounters,
    trace: Option<Vec<FlowCall>>,
}

impl<'a, P: Problem + ?Sized> Integrator<'a, P> {
    pub fn new(tree: &'a SplittingTree, problem: &'a P, mode: Mode) -> Result<Self, EngineError> {
        let violations = validate_tree(tree);
        if !violations.is_empty() {
            return Err(TreeError::Invalid(violations).into());
        }
        if tree.n_partitions() != problem.n_partitions() {
            return Err(EngineError::PartitionMismatch { tree: tree.n_partitions(), problem: problem.n_partitions() });
        }
        Ok(Integrator {
            tree,
            problem,
            mode,
            counters: EvalCounters::new(tree.len(), tree.n_partitions()),
            trace: None,
        })
    }

    /// Records every node application from now on.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn counters(&self) -> &EvalCounters {
        &self.counters
    }

    pub fn into_counters(self) -> EvalCounters {
        self.counters
    }

    pub fn trace(&self) -> &[FlowCall] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<FlowCall> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), EngineError> {
        if x.len() != self.problem.dim() {
            return Err(EngineError::DimensionMismatch { expected: self.problem.dim(), found: x.len() });
        }
        Ok(())
    }

    /// One full step of size `h` in the configured mode.
    pub fn step(&mut self, x: &mut [f64], h: f64) -> Result<(), EngineError> {
        self.check_dim(x)?;
        let root = self.tree.root();
        match self.mode {
            Mode::Singlerate => self.hsm(root, x, h, h),
            Mode::Multirate { reweight } => self.mr(root, x, 1.0, h, h, reweight),
        }
    }

    /// Applies the multirate method of node `v` for a sub-step of size `c h`.
    pub fn mr_step(&mut self, x: &mut [f64], c: f64, h: f64, v: NodeId, reweight: bool) -> Result<(), EngineError> {
        self.check_dim(x)?;
        if self.tree.get(v).is_none() {
            return Err(TreeError::UnknownNode(v).into());
        }
        self.mr(v, x, c, c * h, h, reweight)
    }

    fn record(&mut self, node: NodeId, partition: Option<usize>, step: f64, h: f64) {
        if let Some(trace) = &mut self.trace {
            let coefficient = if h != 0.0 { step / h } else { 0.0 };
            trace.push(FlowCall { node, partition, coefficient, step });
        }
    }

    fn leaf(&mut self, v: NodeId, x: &mut [f64], step: f64, h: f64) -> Result<(), EngineError> {
        let node = self.tree.node(v);
        let m = node.partition().expect("leaf is a singleton");
        match node.kind {
            NodeKind::LeafExact => self.problem.exact_flow(m, step, x)?,
            NodeKind::LeafNumeric { stepper, .. } => {
                self.problem.numeric_step(m, stepper, step, x);
                self.counters.field_evals[m - 1] += stepper.stages() as u64;
            }
            NodeKind::Inner { .. } => unreachable!("leaf() called on inner node"),
        }
        self.counters.node_calls[v.0] += 1;
        self.counters.leaf_flows[m - 1] += 1;
        self.record(v, Some(m), step, h);
        Ok(())
    }

    // Singlerate recursion. `h` is the full outer step, kept only for the trace.
    fn hsm(&mut self, v: NodeId, x: &mut [f64], step: f64, h: f64) -> Result<(), EngineError> {
        let tree = self.tree;
        let node = tree.node(v);
        let NodeKind::Inner { scheme, left, right } = &node.kind else {
            return self.leaf(v, x, step, h);
        };
        self.counters.node_calls[v.0] += 1;
        self.record(v, None, step, h);
        for (&a, &b) in scheme.a.iter().zip(&scheme.b) {
            if a != 0.0 {
                self.hsm(*left, x, a * step, h)?;
            }
            if b != 0.0 {
                self.hsm(*right, x, b * step, h)?;
            }
        }
        Ok(())
    }

    // Multirate recursion. `c` is the step coefficient relative to `h` and `step`
    // carries `c h` without re-rounding, so that unit factors reproduce
    // the singlerate recursion bit for bit.
    fn mr(&mut self, v: NodeId, x: &mut [f64], c: f64, step: f64, h: f64, reweight: bool) -> Result<(), EngineError> {
        if c == 0.0 {
            return Ok(());
        }
        let tree = self.tree;
        let node = tree.node(v);
        let kt = if v == tree.root() || matches!(node.kind, NodeKind::LeafExact) {
            1
        } else if reweight {
            reweighted_factor(c, node.multirate_factor)
        } else {
            u64::from(node.multirate_factor)
        };
        let ktf = kt as f64;
        let (sub_c, sub_step) = (c / ktf, step / ktf);
        match &node.kind {
            NodeKind::Inner { scheme, left, right } => {
                for _ in 0..kt {
                    self.counters.node_calls[v.0] += 1;
                    self.record(v, None, sub_step, h);
                    for (&a, &b) in scheme.a.iter().zip(&scheme.b) {
                        if a != 0.0 {
                            self.mr(*left, x, a * sub_c, a * sub_step, h, reweight)?;
                        }
                        if b != 0.0 {
                            self.mr(*right, x, b * sub_c, b * sub_step, h, reweight)?;
                        }
                    }
                }
            }
            NodeKind::LeafNumeric { .. } => {
                for _ in 0..kt {
                    self.leaf(v, x, sub_step, h)?;
                }
            }
            NodeKind::LeafExact => self.leaf(v, x, step, h)?,
        }
        Ok(())
    }
}

/// One singlerate step from `x`.
pub fn step<P: Problem + ?Sized>(
    tree: &SplittingTree,
    problem: &P,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, EngineError> {
    let mut y = x.to_vec();
    Integrator::new(tree, problem, Mode::Singlerate)?.step(&mut y, h)?;
    Ok(y)
}

/// Multirate application of node `v` with coefficient `c`.
/// A full step is `mr_step(tree, problem, x, 1.0, h, tree.root(), true)`.
pub fn mr_step<P: Problem + ?Sized>(
    tree: &SplittingTree,
    problem: &P,
    x: &[f64],
    c: f64,
    h: f64,
    v: NodeId,
    reweight: bool,
) -> Result<Vec<f64>, EngineError> {
    let mut y = x.to_vec();
    Integrator::new(tree, problem, Mode::Multirate { reweight })?.mr_step(&mut y, c, h, v, reweight)?;
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub counters: EvalCounters,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Number of steps of size `h` that reach `t_end`.
pub fn step_count(h: f64, t_end: f64) -> Result<usize, EngineError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(EngineError::InvalidStepSize(h));
    }
    let n = (t_end / h).round();
    if t_end.is_nan() || t_end <= 0.0 || n < 1.0 || (n * h - t_end).abs() > 1e-10 * t_end {
        return Err(EngineError::NonMultipleEndTime { t_end, h });
    }
    Ok(n as usize)
}

/// Integrates from `t = 0` to `t_end`, sampling the initial state, every
/// `sample_every`-th step (0 disables) and the final state.
pub fn integrate<P: Problem + ?Sized>(
    tree: &SplittingTree,
    problem: &P,
    x0: &[f64],
    h: f64,
    t_end: f64,
    mode: Mode,
    sample_every: usize,
) -> Result<Trajectory, EngineError> {
    let n = step_count(h, t_end)?;
    let mut integrator = Integrator::new(tree, problem, mode)?;
    let mut x = x0.to_vec();
    integrator.check_dim(&x)?;
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    for i in 1..=n {
        integrator.step(&mut x, h)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(EngineError::Divergence { step: i, t: i as f64 * h });
        }
        if i == n || (sample_every > 0 && i % sample_every == 0) {
            times.push(if i == n { t_end } else { i as f64 * h });
            states.push(x.clone());
        }
    }
    Ok(Trajectory { times, states, counters: integrator.into_counters() })
}

/// `max_i |(Phi_{-h} o Phi_h)(x0) - x0|_i`.
pub fn reversibility_defect<P: Problem + ?Sized>(
    tree: &SplittingTree,
    problem: &P,
    x0: &[f64],
    h: f64,
    mode: Mode,
) -> Result<f64, EngineError> {
    let mut integrator = Integrator::new(tree, problem, mode)?;
    let mut x = x0.to_vec();
    integrator.step(&mut x, h)?;
    integrator.step(&mut x, -h)?;
    Ok(x.iter().zip(x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{self, FpuMethod};
    use crate::problems::{FpuParams, FpuProblem, RigidBody};
    use crate::schemes::{BuiltinScheme, LeafStepper};
    use crate::tree::{NodeSpec, SubsetMask};

    /// Linear drift `x_m' = 1` per partition; exact flows add `h`.
    struct Drift(usize);

    impl Problem for Drift {
        fn n_partitions(&self) -> usize {
            self.0
        }
        fn dim(&self) -> usize {
            self.0
        }
        fn field(&self, m: usize, _x: &[f64], dx: &mut [f64]) {
            dx.fill(0.0);
            dx[m - 1] = 1.0;
        }
        fn exact_flow(&self, m: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
            x[m - 1] += h;
            Ok(())
        }
    }

    fn leaf_trace(trace: &[FlowCall]) -> Vec<(usize, f64)> {
        trace.iter().filter_map(|c| c.partition.map(|m| (m, c.coefficient))).collect()
    }

    #[test]
    fn five_partition_strang_trace_matches_expansion() {
        let tree = presets::five_partition_tree(BuiltinScheme::Strang.scheme());
        let p = Drift(5);
        let mut it = Integrator::new(&tree, &p, Mode::Singlerate).unwrap().with_trace();
        let mut x = vec![0.0; 5];
        it.step(&mut x, 1.0).unwrap();
        let half: Vec<(usize, f64)> =
            vec![(1, 0.125), (5, 0.25), (1, 0.125), (3, 0.5), (1, 0.125), (5, 0.25), (1, 0.125), (2, 0.5)];
        let mut expected = half.clone();
        expected.push((4, 1.0));
        expected.extend(half.iter().rev());
        assert_eq!(leaf_trace(it.trace()), expected);
        assert_eq!(x, vec![1.0; 5]);
    }

    #[test]
    fn lie_trotter_chain_is_flat_sequence() {
        let tree = presets::chain_tree(6, BuiltinScheme::LieTrotter.scheme());
        let p = Drift(6);
        let mut it = Integrator::new(&tree, &p, Mode::Singlerate).unwrap().with_trace();
        let mut x = vec![0.0; 6];
        it.step(&mut x, 0.3).unwrap();
        let expected: Vec<(usize, f64)> = (1..=6).map(|m| (m, 1.0)).collect();
        assert_eq!(leaf_trace(it.trace()), expected);
    }

    #[test]
    fn strang_chain_is_symmetric_strang() {
        let tree = presets::chain_tree(4, BuiltinScheme::Strang.scheme());
        let p = Drift(4);
        let mut it = Integrator::new(&tree, &p, Mode::Singlerate).unwrap().with_trace();
        let mut x = vec![0.0; 4];
        it.step(&mut x, 1.0).unwrap();
        // N-term Strang
        let expected = vec![(1, 0.5), (2, 0.5), (3, 0.5), (4, 1.0), (3, 0.5), (2, 0.5), (1, 0.5)];
        assert_eq!(leaf_trace(it.trace()), expected);
    }

    #[test]
    fn zero_step_is_identity() {
        let tree = presets::rigid_body_tree(presets::RootPlacement::LeafFirst, BuiltinScheme::Yoshida9);
        let p = RigidBody::default();
        let x0 = p.initial_state();
        assert_eq!(step(&tree, &p, &x0, 0.0).unwrap(), x0);
        assert_eq!(reversibility_defect(&tree, &p, &x0, 0.0, Mode::Singlerate).unwrap(), 0.0);
    }

    #[test]
    fn reweighted_factor_examples() {
        assert_eq!(reweighted_factor(0.253978510841060, 10), 3);
        assert_eq!(reweighted_factor(1.0, 6), 6);
        assert_eq!(reweighted_factor(0.0, 6), 0);
        assert_eq!(reweighted_factor(-0.5, 6), 3);
        assert_eq!(reweighted_factor(1e-9, 6), 1);
        // 0.1 * 30 rounds to 3.0000000000000004 in floating point
        assert_eq!(reweighted_factor(0.1, 30), 4);
        let omf4 = BuiltinScheme::Omf4.scheme();
        let max = omf4.a.iter().map(|&a| reweighted_factor(a, 10)).max().unwrap();
        assert_eq!(max, 6);
    }

    #[test]
    fn multirate_with_unit_factors_is_singlerate() {
        let tree = presets::five_partition_tree(BuiltinScheme::Omf4.scheme());
        let p = Drift(5);
        let x0 = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        let a = step(&tree, &p, &x0, 0.37).unwrap();
        let b = mr_step(&tree, &p, &x0, 1.0, 0.37, tree.root(), true).unwrap();
        let c = mr_step(&tree, &p, &x0, 1.0, 0.37, tree.root(), false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn strang_node_with_factor_six_at_half_coefficient() {
        // inner strang node {1,2} with k = 6 below a lie_trotter root
        let inner = NodeSpec::inner(BuiltinScheme::Strang.scheme(), NodeSpec::exact(1), NodeSpec::exact(2)).with_k(6);
        let spec = NodeSpec::inner(BuiltinScheme::LieTrotter.scheme(), inner, NodeSpec::exact(3));
        let tree = crate::tree::SplittingTree::build(3, spec).unwrap();
        let v = tree.find_subset(SubsetMask::from_indices([1, 2])).unwrap();
        let p = Drift(3);
        let mut it = Integrator::new(&tree, &p, Mode::Multirate { reweight: true }).unwrap().with_trace();
        let mut x = vec![0.0; 3];
        it.mr_step(&mut x, 0.5, 1.0, v, true).unwrap();
        let sweep = 0.5 / 3.0;
        let expected: Vec<(usize, f64)> =
            (0..3).flat_map(|_| [(1, 0.5 * sweep), (2, sweep), (1, 0.5 * sweep)]).collect();
        let got = leaf_trace(it.trace());
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!(g.0, e.0);
            assert!((g.1 - e.1).abs() < 1e-15);
        }
        assert_eq!(it.counters().node_calls[v.0], 3);
    }

    #[test]
    fn fast_substeps_respect_the_cap() {
        let p = FpuProblem::new(FpuParams::default());
        let x0 = p.initial_state();
        let h = 1.0 / 7.0;
        for method in [FpuMethod::Yoshida4, FpuMethod::Homf4, FpuMethod::Comp4] {
            for k in [1, 6, 10, 20, 100] {
                let tree = presets::fpu_tree(method, k);
                let hf = tree.find_subset(SubsetMask::from_indices([2, 3])).unwrap();
                let mut it = Integrator::new(&tree, &p, Mode::Multirate { reweight: true }).unwrap().with_trace();
                let mut x = x0.clone();
                it.step(&mut x, h).unwrap();
                let max = it.trace().iter().filter(|c| c.node == hf).map(|c| c.step.abs()).fold(0.0, f64::max);
                assert!(max <= h / k as f64 + 1e-15, "{method:?} k={k}: {max}");
                if k == 10 {
                    let tree20 = presets::fpu_tree(method, 20);
                    let mut it20 =
                        Integrator::new(&tree20, &p, Mode::Multirate { reweight: true }).unwrap().with_trace();
                    let mut x = x0.clone();
                    it20.step(&mut x, h).unwrap();
                    let max20 = it20.trace().iter().filter(|c| c.node == hf).map(|c| c.step.abs()).fold(0.0, f64::max);
                    assert!(max20 <= 0.5 * h / 10.0 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn step_fractions_sum_to_h() {
        for scheme in BuiltinScheme::ALL {
            let tree = presets::five_partition_tree(scheme.scheme());
            let p = Drift(5);
            let mut it = Integrator::new(&tree, &p, Mode::Singlerate).unwrap().with_trace();
            let mut x = vec![0.0; 5];
            it.step(&mut x, 0.7).unwrap();
            for node in tree.nodes() {
                let sum: f64 = it.trace().iter().filter(|c| c.node == node.id).map(|c| c.step).sum();
                assert!((sum - 0.7).abs() < 1e-12, "{scheme:?} {}: {sum}", node.subset);
            }
        }
    }

    #[test]
    fn integrate_checks_end_time() {
        let tree = presets::chain_tree(2, BuiltinScheme::Strang.scheme());
        let p = Drift(2);
        assert!(matches!(
            integrate(&tree, &p, &[0.0, 0.0], 0.3, 1.0, Mode::Singlerate, 1),
            Err(EngineError::NonMultipleEndTime { .. })
        ));
        assert!(matches!(
            integrate(&tree, &p, &[0.0, 0.0], 0.0, 1.0, Mode::Singlerate, 1),
            Err(EngineError::InvalidStepSize(_))
        ));
        let one = integrate(&tree, &p, &[0.0, 0.0], 0.25, 0.25, Mode::Singlerate, 1).unwrap();
        assert_eq!(one.times, vec![0.0, 0.25]);
        assert_eq!(one.counters.node_calls[tree.root().0], 1);

        let tr = integrate(&tree, &p, &[0.0, 0.0], 0.1, 1.0, Mode::Singlerate, 3).unwrap();
        assert_eq!(tr.times.len(), 5); // 0, 0.3, 0.6, 0.9, 1.0
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert!((tr.final_state()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn divergence_reports_step_index() {
        struct Blowup;
        impl Problem for Blowup {
            fn n_partitions(&self) -> usize {
                2
            }
            fn dim(&self) -> usize {
                1
            }
            fn field(&self, _m: usize, x: &[f64], dx: &mut [f64]) {
                dx[0] = x[0] * x[0];
            }
            fn exact_flow(&self, _m: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
                x[0] *= 1e100f64.powf(h);
                Ok(())
            }
        }
        let tree = presets::chain_tree(2, BuiltinScheme::LieTrotter.scheme());
        let err = integrate(&tree, &Blowup, &[1.0], 1.0, 10.0, Mode::Singlerate, 0).unwrap_err();
        assert!(matches!(err, EngineError::Divergence { step: 2, .. }), "{err}");
    }

    #[test]
    fn missing_exact_flow_and_mismatches() {
        struct NoFlow;
        impl Problem for NoFlow {
            fn n_partitions(&self) -> usize {
                2
            }
            fn dim(&self) -> usize {
                1
            }
            fn field(&self, _m: usize, _x: &[f64], dx: &mut [f64]) {
                dx[0] = 1.0;
            }
        }
        let tree = presets::chain_tree(2, BuiltinScheme::Strang.scheme());
        assert!(matches!(step(&tree, &NoFlow, &[0.0], 0.1), Err(EngineError::MissingExactFlow(1))));
        assert!(matches!(step(&tree, &NoFlow, &[0.0, 0.0], 0.1), Err(EngineError::DimensionMismatch { .. })));
        let tree3 = presets::chain_tree(3, BuiltinScheme::Strang.scheme());
        assert!(matches!(step(&tree3, &NoFlow, &[0.0], 0.1), Err(EngineError::PartitionMismatch { .. })));

        // numeric leaves use the vector field instead
        let spec = NodeSpec::inner(
            BuiltinScheme::Strang.scheme(),
            NodeSpec::numeric(1, LeafStepper::Euler),
            NodeSpec::numeric(2, LeafStepper::Rk4),
        );
        let tree = crate::tree::SplittingTree::build(2, spec).unwrap();
        let mut it = Integrator::new(&tree, &NoFlow, Mode::Singlerate).unwrap();
        let mut x = vec![0.0];
        it.step(&mut x, 0.1).unwrap();
        assert!((x[0] - 0.2).abs() < 1e-15);
        assert_eq!(it.counters().field_evals, vec![2, 4]);
    }

    #[test]
    fn numeric_leaf_multirate_substeps() {
        let spec = NodeSpec::inner(
            BuiltinScheme::Strang.scheme(),
            NodeSpec::exact(1),
            NodeSpec::numeric(2, LeafStepper::Midpoint).with_k(4),
        );
        let tree = crate::tree::SplittingTree::build(2, spec).unwrap();
        let p = Drift(2);
        let mut it = Integrator::new(&tree, &p, Mode::Multirate { reweight: true }).unwrap().with_trace();
        let mut x = vec![0.0; 2];
        it.step(&mut x, 0.2).unwrap();
        let calls: Vec<_> = it.trace().iter().filter(|c| c.partition == Some(2)).collect();
        assert_eq!(calls.len(), 4);
        assert!(calls.iter().all(|c| (c.step - 0.05).abs() < 1e-16));
        assert!((x[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rigid_body_norm_after_every_flow() {
        struct Checked(RigidBody);
        impl Problem for Checked {
            fn n_partitions(&self) -> usize {
                3
            }
            fn dim(&self) -> usize {
                3
            }
            fn field(&self, m: usize, x: &[f64], dx: &mut [f64]) {
                self.0.field(m, x, dx)
            }
            fn exact_flow(&self, m: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
                self.0.exact_flow(m, h, x)?;
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() <= 1e-13, "norm drifted to {n}");
                Ok(())
            }
        }
        let p = Checked(RigidBody::default());
        let x0 = p.0.initial_state();
        for scheme in [BuiltinScheme::Yoshida9, BuiltinScheme::Yoshida7] {
            let tree = presets::rigid_body_tree(presets::RootPlacement::PairFirst, scheme);
            integrate(&tree, &p, &x0, 0.1, 100.0, Mode::Singlerate, 0).unwrap();
        }
    }

    #[test]
    fn self_adjoint_trees_are_reversible() {
        let p = RigidBody::default();
        let x0 = p.initial_state();
        let strang = presets::chain_tree(3, BuiltinScheme::Strang.scheme());
        assert!(reversibility_defect(&strang, &p, &x0, 0.1, Mode::Singlerate).unwrap() <= 1e-12);
        let lt = presets::chain_tree(3, BuiltinScheme::LieTrotter.scheme());
        assert!(reversibility_defect(&lt, &p, &x0, 0.1, Mode::Singlerate).unwrap() > 1e-6);
    }
}
