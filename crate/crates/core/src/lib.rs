//! Hierarchical and multirate hierarchical splitting methods for N-split
//! ODE systems `x' = f_1(x) + ... + f_N(x)`.
//!
//! A [`SplittingTree`] recursively splits `{1..N}` into two-split
//! subproblems, each solved with a [`TwoSplitScheme`]. The [`engine`]
//! executes trees in singlerate or multirate mode and counts flow
//! evaluations; [`analysis`] evaluates leading-error scaling factors and
//! fits convergence orders.

pub mod analysis;
pub mod bench;
pub mod config;
pub mod engine;
pub mod presets;
pub mod problems;
pub mod schemes;
pub mod tree;

pub use analysis::{
    error_scaling_factor, estimate_order, flow_eval_counts, min_multirate_factor, mr_error_scaling_factor,
    AnalysisError, OrderFit,
};
pub use config::{parse_tree_config, tree_to_json, ConfigError};
pub use engine::{integrate, EngineError, EvalCounters, Integrator, Mode, Problem, Trajectory};
pub use schemes::{BuiltinScheme, LeafStepper, TwoSplitScheme};
pub use tree::{NodeId, NodeSpec, SplittingTree, SubsetMask};
