//! Splitting trees and multirate splitting trees.
//!
//! A splitting tree is a full ordered binary tree whose nodes are subsets of
//! the partition indices `{1, ..., N}`. Inner nodes carry a two-split scheme
//! that alternates between the left and the right child; leaves are singletons
//! that are advanced either by an exact flow or by a numerical stepper.
//! Every non-root node carries the multirate factor of the edge to its parent.

use std::fmt;

use crate::schemes::{LeafStepper, TwoSplitScheme};

/// Largest supported number of partitions.
pub const MAX_PARTITIONS: usize = 64;

/// Set of partition indices drawn from `{1, ..., 64}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SubsetMask(u64);

impl SubsetMask {
    pub const EMPTY: SubsetMask = SubsetMask(0);

    /// The singleton `{m}`. Panics if `m` is outside `1..=64`.
    pub fn singleton(m: usize) -> Self {
        assert!((1..=MAX_PARTITIONS).contains(&m), "partition index {m} out of range");
        SubsetMask(1u64 << (m - 1))
    }

    /// The full set `{1, ..., n}`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_PARTITIONS, "at most {MAX_PARTITIONS} partitions are supported");
        if n == MAX_PARTITIONS {
            SubsetMask(u64::MAX)
        } else {
            SubsetMask((1u64 << n) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices.into_iter().fold(SubsetMask::EMPTY, |acc, m| acc.union(SubsetMask::singleton(m)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, m: usize) -> bool {
        (1..=MAX_PARTITIONS).contains(&m) && self.0 & (1u64 << (m - 1)) != 0
    }

    pub fn union(self, other: SubsetMask) -> SubsetMask {
        SubsetMask(self.0 | other.0)
    }

    pub fn is_disjoint(self, other: SubsetMask) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// Indices in increasing order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        (1..=MAX_PARTITIONS).filter(move |&m| self.contains(m))
    }

    /// The only element of a singleton.
    pub fn single(self) -> Option<usize> {
        (self.len() == 1).then(|| self.0.trailing_zeros() as usize + 1)
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, m) in self.indices().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("}")
    }
}

/// Index of a node inside its [`SplittingTree`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Inner { scheme: TwoSplitScheme, left: NodeId, right: NodeId },
    LeafExact,
    LeafNumeric { stepper: LeafStepper, order: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub subset: SubsetMask,
    pub kind: NodeKind,
    /// Factor on the edge to the parent; 1 for the root and for exact leaves.
    pub multirate_factor: u32,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        !matches!(self.kind, NodeKind::Inner { .. })
    }

    pub fn children(&self) -> Option<(NodeId, NodeId)> {
        match self.kind {
            NodeKind::Inner { left, right, .. } => Some((left, right)),
            _ => None,
        }
    }

    pub fn scheme(&self) -> Option<&TwoSplitScheme> {
        match &self.kind {
            NodeKind::Inner { scheme, .. } => Some(scheme),
            _ => None,
        }
    }

    /// Order of the method assigned to this node; `None` for exact leaves.
    pub fn order(&self) -> Option<u32> {
        match &self.kind {
            NodeKind::Inner { scheme, .. } => Some(scheme.order),
            NodeKind::LeafNumeric { order, .. } => Some(*order),
            NodeKind::LeafExact => None,
        }
    }

    /// Partition index of a leaf.
    pub fn partition(&self) -> Option<usize> {
        if self.is_leaf() {
            self.subset.single()
        } else {
            None
        }
    }
}

/// Rule broken by a node of a malformed tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    TooManyPartitions,
    RootNotFullSet,
    RootHasMultirateFactor,
    ChildrenNotDisjoint,
    ChildrenUnionMismatch,
    LeafNotSingleton,
    PartitionOutOfRange,
    ExactLeafWithMultirateFactor,
    ZeroMultirateFactor,
    ZeroOrder,
    DanglingChild,
    SharedChild,
    Unreachable,
    LeafCount { expected: usize, found: usize },
    NodeCount { expected: usize, found: usize },
    InconsistentScheme,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::TooManyPartitions => write!(f, "more than {MAX_PARTITIONS} partitions"),
            Rule::RootNotFullSet => f.write_str("root subset is not {1..N}"),
            Rule::RootHasMultirateFactor => f.write_str("root multirate factor must be 1"),
            Rule::ChildrenNotDisjoint => f.write_str("children not disjoint"),
            Rule::ChildrenUnionMismatch => f.write_str("children union differs from node subset"),
            Rule::LeafNotSingleton => f.write_str("leaf subset is not a singleton"),
            Rule::PartitionOutOfRange => f.write_str("partition index outside 1..N"),
            Rule::ExactLeafWithMultirateFactor => f.write_str("exact leaf must have multirate factor 1"),
            Rule::ZeroMultirateFactor => f.write_str("multirate factor must be positive"),
            Rule::ZeroOrder => f.write_str("numeric leaf order must be positive"),
            Rule::DanglingChild => f.write_str("child id does not exist"),
            Rule::SharedChild => f.write_str("node has more than one parent"),
            Rule::Unreachable => f.write_str("node not reachable from root"),
            Rule::LeafCount { expected, found } => {
                write!(f, "expected {expected} leaves, found {found}")
            }
            Rule::NodeCount { expected, found } => {
                write!(f, "expected {expected} nodes, found {found}")
            }
            Rule::InconsistentScheme => f.write_str("scheme coefficients do not sum to 1"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub node: NodeId,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {}", self.node, self.rule)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TreeError {
    #[error("invalid splitting tree: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Recursive description of a tree, used to build a [`SplittingTree`].
#[derive(Clone, Debug, PartialEq)]
pub enum NodeSpec {
    Leaf { partition: usize, flow: LeafFlow, k: u32 },
    Inner { scheme: TwoSplitScheme, subset: Option<SubsetMask>, k: u32, left: Box<NodeSpec>, right: Box<NodeSpec> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum LeafFlow {
    Exact,
    Numeric { stepper: LeafStepper, order: u32 },
}

impl NodeSpec {
    pub fn exact(partition: usize) -> Self {
        NodeSpec::Leaf { partition, flow: LeafFlow::Exact, k: 1 }
    }

    pub fn numeric(partition: usize, stepper: LeafStepper) -> Self {
        NodeSpec::Leaf { partition, flow: LeafFlow::Numeric { stepper, order: stepper.order() }, k: 1 }
    }

    pub fn inner(scheme: TwoSplitScheme, left: NodeSpec, right: NodeSpec) -> Self {
        NodeSpec::Inner { scheme, subset: None, k: 1, left: Box::new(left), right: Box::new(right) }
    }

    /// Sets the multirate factor on the edge above this node.
    pub fn with_k(mut self, factor: u32) -> Self {
        match &mut self {
            NodeSpec::Leaf { k, .. } | NodeSpec::Inner { k, .. } => *k = factor,
        }
        self
    }
}

/// Path from the root to a node together with the left/right indicator of
/// every step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathInfo {
    /// Inner nodes from the root down to, but excluding, the target.
    pub inner_path: Vec<NodeId>,
    /// `true` where the path continues through the left child.
    pub delta: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplittingTree {
    nodes: Vec<TreeNode>,
    root: NodeId,
    n_partitions: usize,
    parents: Vec<Option<NodeId>>,
}

impl SplittingTree {
    /// Flattens `root` in preorder, fills in inner subsets and validates.
    pub fn build(n_partitions: usize, root: NodeSpec) -> Result<Self, TreeError> {
        let mut nodes = Vec::new();
        let mut declared = Vec::new();
        flatten(&root, &mut nodes, &mut declared);
        let tree = SplittingTree::from_raw(n_partitions, nodes, NodeId(0));

        let mut violations = validate_tree(&tree);
        for (id, subset) in declared {
            if tree.nodes[id.0].subset != subset {
                violations.push(Violation { node: id, rule: Rule::ChildrenUnionMismatch });
            }
        }
        if violations.is_empty() {
            Ok(tree)
        } else {
            Err(TreeError::Invalid(violations))
        }
    }

    /// Wraps nodes without validation. Use [`validate_tree`] afterwards.
    pub fn from_raw(n_partitions: usize, nodes: Vec<TreeNode>, root: NodeId) -> Self {
        let mut parents = vec![None; nodes.len()];
        for node in &nodes {
            if let Some((l, r)) = node.children() {
                for c in [l, r] {
                    if let Some(p) = parents.get_mut(c.0) {
                        if p.is_none() {
                            *p = Some(node.id);
                        }
                    }
                }
            }
        }
        SplittingTree { nodes, root, n_partitions, parents }
    }

    pub fn n_partitions(&self) -> usize {
        self.n_partitions
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&TreeNode> {
        self.nodes.get(id.0)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(id.0).copied().flatten()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn find_subset(&self, subset: SubsetMask) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.subset == subset).map(|n| n.id)
    }

    /// Leaf carrying partition `m`.
    pub fn leaf_of(&self, m: usize) -> Option<NodeId> {
        self.leaves().find(|n| n.partition() == Some(m)).map(|n| n.id)
    }

    /// True when every multirate factor equals 1.
    pub fn is_singlerate(&self) -> bool {
        self.nodes.iter().all(|n| n.multirate_factor == 1)
    }

    /// Largest multirate factor on any edge.
    pub fn max_multirate_factor(&self) -> u32 {
        self.nodes.iter().map(|n| n.multirate_factor).max().unwrap_or(1)
    }

    /// Replaces the factor of every edge whose factor is not 1.
    pub fn with_fast_factor(&self, k: u32) -> SplittingTree {
        assert!(k >= 1, "multirate factor must be positive");
        let mut tree = self.clone();
        for node in &mut tree.nodes {
            if node.multirate_factor != 1 {
                node.multirate_factor = k;
            }
        }
        tree
    }

    /// Sets the factor on the edge above `id`.
    pub fn with_factor(&self, id: NodeId, k: u32) -> Result<SplittingTree, TreeError> {
        if id.0 >= self.nodes.len() {
            return Err(TreeError::UnknownNode(id));
        }
        let mut tree = self.clone();
        tree.nodes[id.0].multirate_factor = k;
        let violations = validate_tree(&tree);
        if violations.is_empty() {
            Ok(tree)
        } else {
            Err(TreeError::Invalid(violations))
        }
    }

    /// Replaces the scheme of inner node `id`.
    pub fn with_scheme(&self, id: NodeId, scheme: TwoSplitScheme) -> Result<SplittingTree, TreeError> {
        let mut tree = self.clone();
        match tree.nodes.get_mut(id.0).map(|n| &mut n.kind) {
            Some(NodeKind::Inner { scheme: s, .. }) => *s = scheme,
            _ => return Err(TreeError::UnknownNode(id)),
        }
        Ok(tree)
    }

    /// Recursive description of the tree, the inverse of [`SplittingTree::build`].
    pub fn to_spec(&self) -> NodeSpec {
        self.spec_of(self.root)
    }

    fn spec_of(&self, id: NodeId) -> NodeSpec {
        let node = self.node(id);
        match &node.kind {
            NodeKind::Inner { scheme, left, right } => NodeSpec::Inner {
                scheme: scheme.clone(),
                subset: Some(node.subset),
                k: node.multirate_factor,
                left: Box::new(self.spec_of(*left)),
                right: Box::new(self.spec_of(*right)),
            },
            NodeKind::LeafExact => NodeSpec::Leaf {
                partition: node.subset.single().unwrap_or(0),
                flow: LeafFlow::Exact,
                k: node.multirate_factor,
            },
            NodeKind::LeafNumeric { stepper, order } => NodeSpec::Leaf {
                partition: node.subset.single().unwrap_or(0),
                flow: LeafFlow::Numeric { stepper: *stepper, order: *order },
                k: node.multirate_factor,
            },
        }
    }

    /// True when every assigned scheme is self-adjoint and every leaf exact.
    pub fn is_self_adjoint(&self) -> bool {
        self.nodes.iter().all(|n| match &n.kind {
            NodeKind::Inner { scheme, .. } => scheme.self_adjoint,
            NodeKind::LeafExact => true,
            NodeKind::LeafNumeric { stepper, .. } => stepper.self_adjoint(),
        })
    }

    /// Depth of a node (the root has depth 0).
    pub fn depth(&self, id: NodeId) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            d += 1;
            cur = p;
        }
        d
    }
}

fn flatten(spec: &NodeSpec, nodes: &mut Vec<TreeNode>, declared: &mut Vec<(NodeId, SubsetMask)>) -> NodeId {
    let id = NodeId(nodes.len());
    match spec {
        NodeSpec::Leaf { partition, flow, k } => {
            let subset = if (1..=MAX_PARTITIONS).contains(partition) {
                SubsetMask::singleton(*partition)
            } else {
                SubsetMask::EMPTY
            };
            let kind = match flow {
                LeafFlow::Exact => NodeKind::LeafExact,
                LeafFlow::Numeric { stepper, order } => NodeKind::LeafNumeric { stepper: *stepper, order: *order },
            };
            nodes.push(TreeNode { id, subset, kind, multirate_factor: *k });
        }
        NodeSpec::Inner { scheme, subset, k, left, right } => {
            // placeholder children, patched below
            nodes.push(TreeNode {
                id,
                subset: SubsetMask::EMPTY,
                kind: NodeKind::Inner { scheme: scheme.clone(), left: id, right: id },
                multirate_factor: *k,
            });
            let l = flatten(left, nodes, declared);
            let r = flatten(right, nodes, declared);
            let union = nodes[l.0].subset.union(nodes[r.0].subset);
            let node = &mut nodes[id.0];
            node.subset = union;
            node.kind = NodeKind::Inner { scheme: scheme.clone(), left: l, right: r };
            if let Some(s) = subset {
                declared.push((id, *s));
            }
        }
    }
    id
}

/// Checks every structural invariant and returns the list of violations
/// (empty for a valid tree).
pub fn validate_tree(tree: &SplittingTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = tree.n_partitions;
    let nodes = &tree.nodes;
    let root = tree.root;
    let mut push = |node: NodeId, rule: Rule| out.push(Violation { node, rule });

    if n == 0 || n > MAX_PARTITIONS {
        push(root, Rule::TooManyPartitions);
        return out;
    }
    let Some(root_node) = nodes.get(root.0) else {
        push(root, Rule::DanglingChild);
        return out;
    };
    if root_node.subset != SubsetMask::full(n) {
        push(root, Rule::RootNotFullSet);
    }
    if root_node.multirate_factor != 1 {
        push(root, Rule::RootHasMultirateFactor);
    }

    // reachability and single-parent checks
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![root];
    seen[root.0] = true;
    while let Some(id) = stack.pop() {
        let node = &nodes[id.0];
        if let Some((l, r)) = node.children() {
            for c in [l, r] {
                match seen.get_mut(c.0) {
                    None => push(id, Rule::DanglingChild),
                    Some(true) => push(c, Rule::SharedChild),
                    Some(s) => {
                        *s = true;
                        stack.push(c);
                    }
                }
            }
        }
    }
    for (i, s) in seen.iter().enumerate() {
        if !s {
            push(NodeId(i), Rule::Unreachable);
        }
    }

    let full = SubsetMask::full(n);
    let mut leaves = 0;
    for node in nodes {
        if node.multirate_factor == 0 {
            push(node.id, Rule::ZeroMultirateFactor);
        }
        if !node.subset.is_subset_of(full) || node.subset.is_empty() {
            push(node.id, Rule::PartitionOutOfRange);
        }
        match &node.kind {
            NodeKind::Inner { scheme, left, right } => {
                if !crate::schemes::check_consistency(scheme) {
                    push(node.id, Rule::InconsistentScheme);
                }
                if let (Some(l), Some(r)) = (nodes.get(left.0), nodes.get(right.0)) {
                    if !l.subset.is_disjoint(r.subset) {
                        push(node.id, Rule::ChildrenNotDisjoint);
                    } else if l.subset.union(r.subset) != node.subset {
                        push(node.id, Rule::ChildrenUnionMismatch);
                    }
                }
            }
            NodeKind::LeafExact | NodeKind::LeafNumeric { .. } => {
                leaves += 1;
                if node.subset.len() != 1 {
                    push(node.id, Rule::LeafNotSingleton);
                }
                match node.kind {
                    NodeKind::LeafExact if node.multirate_factor != 1 => {
                        push(node.id, Rule::ExactLeafWithMultirateFactor)
                    }
                    NodeKind::LeafNumeric { order: 0, .. } => push(node.id, Rule::ZeroOrder),
                    _ => {}
                }
            }
        }
    }
    if leaves != n {
        push(root, Rule::LeafCount { expected: n, found: leaves });
    }
    if nodes.len() != 2 * n - 1 {
        push(root, Rule::NodeCount { expected: 2 * n - 1, found: nodes.len() });
    }
    out
}

/// Inner nodes on the path from the root to `v` and the side taken at each.
pub fn path_info(tree: &SplittingTree, v: NodeId) -> Result<PathInfo, TreeError> {
    if tree.get(v).is_none() {
        return Err(TreeError::UnknownNode(v));
    }
    let mut inner_path = Vec::new();
    let mut delta = Vec::new();
    let mut cur = v;
    while let Some(p) = tree.parent(cur) {
        let (left, _) = tree.node(p).children().expect("parent is an inner node");
        inner_path.push(p);
        delta.push(left == cur);
        cur = p;
    }
    inner_path.reverse();
    delta.reverse();
    Ok(PathInfo { inner_path, delta })
}
