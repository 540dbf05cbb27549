//! Trees used by the benchmark problems.

use std::fmt;
use std::str::FromStr;

use crate::schemes::{BuiltinScheme, TwoSplitScheme};
use crate::tree::{NodeSpec, SplittingTree};

/// Five partitions: `{1..5} -> ({1,3,5} -> ({1,5} -> {1},{5}), {3}), ({2,4} -> {2},{4})`
/// with the same scheme at every inner node and exact leaves.
pub fn five_partition_tree(scheme: TwoSplitScheme) -> SplittingTree {
    let s = || scheme.clone();
    let left = NodeSpec::inner(s(), NodeSpec::inner(s(), NodeSpec::exact(1), NodeSpec::exact(5)), NodeSpec::exact(3));
    let right = NodeSpec::inner(s(), NodeSpec::exact(2), NodeSpec::exact(4));
    SplittingTree::build(5, NodeSpec::inner(s(), left, right)).expect("valid tree")
}

/// `{1..N} -> {1}, ({2..N} -> {2}, (... -> {N-1}, {N}))`, the tree of the
/// flat N-term Lie-Trotter and Strang splittings.
pub fn chain_tree(n: usize, scheme: TwoSplitScheme) -> SplittingTree {
    assert!(n >= 1);
    let mut spec = NodeSpec::exact(n);
    for m in (1..n).rev() {
        spec = NodeSpec::inner(scheme.clone(), NodeSpec::exact(m), spec);
    }
    SplittingTree::build(n, spec).expect("valid tree")
}

/// Which child of the rigid-body root comes first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RootPlacement {
    /// `{1}` left, `{2,3}` right.
    LeafFirst,
    /// `{2,3}` left, `{1}` right.
    PairFirst,
}

/// Rigid-body tree with `root` at `{1,2,3}` and Strang at `{2,3}`.
pub fn rigid_body_tree(placement: RootPlacement, root: BuiltinScheme) -> SplittingTree {
    let pair = NodeSpec::inner(BuiltinScheme::Strang.scheme(), NodeSpec::exact(2), NodeSpec::exact(3));
    let single = NodeSpec::exact(1);
    let (l, r) = match placement {
        RootPlacement::LeafFirst => (single, pair),
        RootPlacement::PairFirst => (pair, single),
    };
    SplittingTree::build(3, NodeSpec::inner(root.scheme(), l, r)).expect("valid tree")
}

/// Integrators on the FPU multirate tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FpuMethod {
    /// Yoshida root, Strang on the fast pair.
    Yoshida4,
    /// OMF4 root and OMF4 on the fast pair.
    Homf4,
    /// OMF4 root, Strang on the fast pair.
    Comp4,
}

impl FpuMethod {
    pub const ALL: [FpuMethod; 3] = [FpuMethod::Yoshida4, FpuMethod::Homf4, FpuMethod::Comp4];

    pub fn name(self) -> &'static str {
        match self {
            FpuMethod::Yoshida4 => "Yoshida4",
            FpuMethod::Homf4 => "HOMF4",
            FpuMethod::Comp4 => "COMP4",
        }
    }
}

impl fmt::Display for FpuMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FpuMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FpuMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown FPU method `{s}`"))
    }
}

/// FPU tree over the partitions `1 = T^s`, `2 = T^f`, `3 = V^f`, `4 = V^s`:
///
/// ```text
/// H ── H - V^s ── T^s
///  │          └── H^f (k) ── T^f
///  │                     └── V^f
///  └── V^s
/// ```
///
/// `H - V^s` uses Lie-Trotter, which is exact there because `T^s` and `H^f`
/// act on disjoint variables.
pub fn fpu_tree(method: FpuMethod, k: u32) -> SplittingTree {
    let (root, fast) = match method {
        FpuMethod::Yoshida4 => (BuiltinScheme::Yoshida9, BuiltinScheme::Strang),
        FpuMethod::Homf4 => (BuiltinScheme::Omf4, BuiltinScheme::Omf4),
        FpuMethod::Comp4 => (BuiltinScheme::Omf4, BuiltinScheme::Strang),
    };
    fpu_tree_with(root.scheme(), BuiltinScheme::LieTrotter.scheme(), fast.scheme(), k)
}

pub fn fpu_tree_with(root: TwoSplitScheme, middle: TwoSplitScheme, fast: TwoSplitScheme, k: u32) -> SplittingTree {
    let hf = NodeSpec::inner(fast, NodeSpec::exact(2), NodeSpec::exact(3)).with_k(k);
    let mid = NodeSpec::inner(middle, NodeSpec::exact(1), hf);
    SplittingTree::build(4, NodeSpec::inner(root, mid, NodeSpec::exact(4))).expect("valid tree")
}
