//! Convergence, work-precision and energy experiments shared by the command
//! line and the test suite.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use crate::analysis::estimate_order;
use crate::config::{parse_tree_config, ConfigError};
use crate::engine::{integrate, EngineError, Mode, Problem};
use crate::problems::{reference_solve, FpuProblem, ReferenceError, ReferenceOptions, RigidBody};
use crate::tree::SplittingTree;

/// Column header of convergence and work-precision CSV output.
pub const CSV_HEADER: [&str; 13] = [
    "experiment",
    "method",
    "tree",
    "problem",
    "h",
    "k",
    "reweight",
    "t_end",
    "error",
    "slope",
    "fast_flow_evals",
    "total_flow_evals",
    "wall_ms",
];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown problem `{0}` (expected rigid-body or fpu)")]
    UnknownProblem(String),
    #[error("unknown tree `{0}`")]
    UnknownTree(String),
    #[error("tree has {tree} partitions but problem {problem} has {expected}")]
    ProblemMismatch { tree: usize, problem: ProblemKind, expected: usize },
    #[error("no step sizes given")]
    NoSteps,
    #[error("energy traces are only available for the fpu problem")]
    NotFpu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    RigidBody,
    Fpu,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::RigidBody => "rigid-body",
            ProblemKind::Fpu => "fpu",
        }
    }

    /// Problem with default parameters.
    pub fn problem(self) -> Box<dyn Problem + Send + Sync> {
        match self {
            ProblemKind::RigidBody => Box::new(RigidBody::default()),
            ProblemKind::Fpu => Box::new(FpuProblem::default()),
        }
    }

    pub fn initial_state(self) -> Vec<f64> {
        match self {
            ProblemKind::RigidBody => RigidBody::default().initial_state(),
            ProblemKind::Fpu => FpuProblem::default().initial_state(),
        }
    }

    pub fn default_t_end(self) -> f64 {
        match self {
            ProblemKind::RigidBody => 100.0,
            ProblemKind::Fpu => 220.0,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rigid-body" | "rigid_body" | "rigidbody" => Ok(ProblemKind::RigidBody),
            "fpu" => Ok(ProblemKind::Fpu),
            _ => Err(BenchError::UnknownProblem(s.to_string())),
        }
    }
}

/// Tree configurations shipped with the crate, by file stem.
pub const FIXTURES: [(&str, &str); 13] = [
    ("rigid_leaf_first_yoshida9", include_str!("../trees/rigid_leaf_first_yoshida9.json")),
    ("rigid_leaf_first_yoshida7", include_str!("../trees/rigid_leaf_first_yoshida7.json")),
    ("rigid_pair_first_yoshida9", include_str!("../trees/rigid_pair_first_yoshida9.json")),
    ("rigid_pair_first_yoshida7", include_str!("../trees/rigid_pair_first_yoshida7.json")),
    ("rigid_chain_lie_trotter", include_str!("../trees/rigid_chain_lie_trotter.json")),
    ("rigid_chain_strang", include_str!("../trees/rigid_chain_strang.json")),
    ("five_strang", include_str!("../trees/five_strang.json")),
    ("chain4_lie_trotter", include_str!("../trees/chain4_lie_trotter.json")),
    ("chain4_strang", include_str!("../trees/chain4_strang.json")),
    ("fpu_yoshida4", include_str!("../trees/fpu_yoshida4.json")),
    ("fpu_homf4", include_str!("../trees/fpu_homf4.json")),
    ("fpu_comp4", include_str!("../trees/fpu_comp4.json")),
    ("fpu_lie_trotter", include_str!("../trees/fpu_lie_trotter.json")),
];

/// Parses a shipped fixture by stem (with or without `.json`).
pub fn fixture_tree(name: &str) -> Result<SplittingTree, BenchError> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    let stem = stem.rsplit('/').next().unwrap_or(stem);
    let (_, text) =
        FIXTURES.iter().find(|(n, _)| *n == stem).ok_or_else(|| BenchError::UnknownTree(name.to_string()))?;
    Ok(parse_tree_config(text)?)
}

/// Multirate factor applied to every edge whose factor is not 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KChoice {
    /// As stored in the tree.
    Tree,
    Fixed(u32),
    /// `ceil(1/h)` for each run.
    InverseStep,
}

impl KChoice {
    pub fn resolve(self, h: f64) -> Option<u32> {
        match self {
            KChoice::Tree => None,
            KChoice::Fixed(k) => Some(k),
            KChoice::InverseStep => Some((1.0 / h - 1e-9).ceil().max(1.0) as u32),
        }
    }
}

impl FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tree" => Ok(KChoice::Tree),
            "1/h" => Ok(KChoice::InverseStep),
            _ => match s.parse::<u32>() {
                Ok(k) if k >= 1 => Ok(KChoice::Fixed(k)),
                _ => Err(format!("invalid multirate factor `{s}` (expected a positive integer or 1/h)")),
            },
        }
    }
}

/// Execution mode for a tree. `None` picks singlerate for trees without
/// multirate edges and reweighted multirate otherwise.
pub fn choose_mode(tree: &SplittingTree, reweight: Option<bool>) -> Mode {
    match reweight {
        None if tree.is_singlerate() => Mode::Singlerate,
        None => Mode::Multirate { reweight: true },
        Some(reweight) => Mode::Multirate { reweight },
    }
}

/// One configured method of an experiment.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub method: String,
    pub tree_name: String,
    pub tree: SplittingTree,
    pub k: KChoice,
    pub reweight: Option<bool>,
}

impl MethodRun {
    pub fn new(method: impl Into<String>, tree_name: impl Into<String>, tree: SplittingTree) -> Self {
        MethodRun { method: method.into(), tree_name: tree_name.into(), tree, k: KChoice::Tree, reweight: None }
    }

    pub fn with_k(mut self, k: KChoice) -> Self {
        self.k = k;
        self
    }

    pub fn with_reweight(mut self, reweight: Option<bool>) -> Self {
        self.reweight = reweight;
        self
    }

    /// Tree and mode used for step size `h`.
    pub fn resolve(&self, h: f64) -> (SplittingTree, Mode) {
        let tree = match self.k.resolve(h) {
            Some(k) => self.tree.with_fast_factor(k),
            None => self.tree.clone(),
        };
        let mode = choose_mode(&tree, self.reweight);
        (tree, mode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    /// Record wall-clock time per row.
    pub timing: bool,
    /// Compute rows on separate threads.
    pub parallel: bool,
    pub reference: ReferenceOptions,
}

impl RunOptions {
    pub fn new(t_end: f64) -> Self {
        RunOptions { t_end, timing: true, parallel: true, reference: ReferenceOptions::default() }
    }
}

/// One row of convergence or work-precision output.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub experiment: String,
    pub method: String,
    pub tree: String,
    pub problem: ProblemKind,
    pub h: f64,
    pub k: u32,
    pub mode: Mode,
    pub t_end: f64,
    /// `None` when the run diverged.
    pub error: Option<f64>,
    pub slope: Option<f64>,
    pub fast_flow_evals: u64,
    pub total_flow_evals: u64,
    pub wall_ms: Option<f64>,
}

impl BenchRecord {
    pub fn diverged(&self) -> bool {
        self.error.is_none()
    }

    pub fn reweight_label(&self) -> &'static str {
        match self.mode {
            Mode::Singlerate => "n/a",
            Mode::Multirate { reweight: true } => "on",
            Mode::Multirate { reweight: false } => "off",
        }
    }

    /// Fields in [`CSV_HEADER`] order. Reals use 17 significant digits.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.method.clone(),
            self.tree.clone(),
            self.problem.to_string(),
            fmt_real(self.h),
            self.k.to_string(),
            self.reweight_label().to_string(),
            fmt_real(self.t_end),
            self.error.map_or_else(|| "nan".to_string(), fmt_real),
            self.slope.map_or_else(String::new, fmt_real),
            self.fast_flow_evals.to_string(),
            self.total_flow_evals.to_string(),
            self.wall_ms.map_or_else(String::new, |w| format!("{w:.3}")),
        ]
    }
}

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

// keyed by problem and the bits of t_end, atol, rtol
type ReferenceCache = Mutex<HashMap<(ProblemKind, u64, u64, u64), Vec<f64>>>;

fn references() -> &'static ReferenceCache {
    static CACHE: OnceLock<ReferenceCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Reference solution at `t_end` from the default initial state, cached per
/// process.
pub fn reference_state(kind: ProblemKind, t_end: f64, opts: &ReferenceOptions) -> Result<Vec<f64>, BenchError> {
    let key = (kind, t_end.to_bits(), opts.atol.to_bits(), opts.rtol.to_bits());
    if let Some(x) = references().lock().expect("reference cache").get(&key) {
        return Ok(x.clone());
    }
    let x = reference_solve(&*kind.problem(), &kind.initial_state(), t_end, opts)?;
    references().lock().expect("reference cache").insert(key, x.clone());
    Ok(x)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn run_one(
    experiment: &str,
    run: &MethodRun,
    kind: ProblemKind,
    h: f64,
    opts: &RunOptions,
    reference: &[f64],
) -> Result<BenchRecord, BenchError> {
    let (tree, mode) = run.resolve(h);
    let problem = kind.problem();
    if tree.n_partitions() != problem.n_partitions() {
        return Err(BenchError::ProblemMismatch {
            tree: tree.n_partitions(),
            problem: kind,
            expected: problem.n_partitions(),
        });
    }
    let start = opts.timing.then(std::time::Instant::now);
    let result = integrate(&tree, &*problem, &kind.initial_state(), h, opts.t_end, mode, 0);
    let wall_ms = start.map(|s| s.elapsed().as_secs_f64() * 1e3);
    let (error, counters) = match result {
        Ok(traj) => (Some(euclidean_distance(traj.final_state(), reference)), Some(traj.counters)),
        Err(EngineError::Divergence { .. }) => (None, None),
        Err(e) => return Err(e.into()),
    };
    let fast = problem.fast_partitions();
    Ok(BenchRecord {
        experiment: experiment.to_string(),
        method: run.method.clone(),
        tree: run.tree_name.clone(),
        problem: kind,
        h,
        k: tree.max_multirate_factor(),
        mode,
        t_end: opts.t_end,
        error,
        slope: None,
        fast_flow_evals: counters.as_ref().map_or(0, |c| c.flows_in(fast)),
        total_flow_evals: counters.as_ref().map_or(0, |c| c.total_flows()),
        wall_ms,
    })
}

/// Runs every method at every step size against the reference solution.
/// Rows are ordered by method, then by `hs`; each method's rows carry the
/// fitted slope over its non-diverged runs.
pub fn run_experiment(
    experiment: &str,
    kind: ProblemKind,
    runs: &[MethodRun],
    hs: &[f64],
    opts: &RunOptions,
) -> Result<Vec<BenchRecord>, BenchError> {
    if hs.is_empty() {
        return Err(BenchError::NoSteps);
    }
    let reference = reference_state(kind, opts.t_end, &opts.reference)?;
    let jobs: Vec<(&MethodRun, f64)> = runs.iter().flat_map(|r| hs.iter().map(move |&h| (r, h))).collect();
    let rows: Vec<Result<BenchRecord, BenchError>> = if opts.parallel && jobs.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(run, h)| {
                    let reference = &reference;
                    s.spawn(move || run_one(experiment, run, kind, h, opts, reference))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    } else {
        jobs.iter().map(|&(run, h)| run_one(experiment, run, kind, h, opts, &reference)).collect()
    };
    let mut rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    for chunk in rows.chunks_mut(hs.len()) {
        let ok: Vec<&BenchRecord> = chunk.iter().filter(|r| !r.diverged()).collect();
        let hs: Vec<f64> = ok.iter().map(|r| r.h).collect();
        let errors: Vec<f64> = ok.iter().filter_map(|r| r.error).collect();
        let slope = estimate_order(&hs, &errors).ok().map(|f| f.slope);
        chunk.iter_mut().for_each(|r| r.slope = slope);
    }
    Ok(rows)
}

/// Fitted slope of a subset of rows, e.g. the three largest step sizes.
pub fn slope_of(rows: &[&BenchRecord]) -> Option<f64> {
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.error.unwrap_or(f64::NAN)).collect();
    estimate_order(&hs, &errors).ok().map(|f| f.slope)
}

/// Fast-flow count needed to reach `target` error, interpolated linearly in
/// log-log coordinates between the two bracketing runs, or extrapolated from
/// the least-squares line when `target` lies outside the measured range.
pub fn cost_at_error(rows: &[&BenchRecord], target: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.error.filter(|e| *e > 0.0).map(|e| (e.ln(), (r.fast_flow_evals as f64).ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t = target.ln();
    for w in pts.windows(2) {
        let ((e0, c0), (e1, c1)) = (w[0], w[1]);
        if e0 <= t && t <= e1 && e1 > e0 {
            return Some((c0 + (c1 - c0) * (t - e0) / (e1 - e0)).exp());
        }
    }
    let n = pts.len() as f64;
    let me = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mc = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let see: f64 = pts.iter().map(|p| (p.0 - me) * (p.0 - me)).sum();
    if see == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - me) * (p.1 - mc)).sum::<f64>() / see;
    Some((mc + slope * (t - me)).exp())
}

/// One sample of the FPU energies.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub oscillatory: Vec<f64>,
    pub total: f64,
    pub hamiltonian: f64,
}

impl EnergyRow {
    pub fn csv_header(m: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=m).map(|j| format!("I{j}")));
        h.push("I_total".into());
        h.push("H".into());
        h
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![fmt_real(self.t)];
        f.extend(self.oscillatory.iter().copied().map(fmt_real));
        f.push(fmt_real(self.total));
        f.push(fmt_real(self.hamiltonian));
        f
    }
}

/// Integrates the FPU problem and samples its energies every
/// `sample_every` steps (and at the end).
pub fn energy_trace(
    tree: &SplittingTree,
    mode: Mode,
    h: f64,
    t_end: f64,
    sample_every: usize,
) -> Result<Vec<EnergyRow>, BenchError> {
    let problem = FpuProblem::default();
    if tree.n_partitions() != problem.n_partitions() {
        return Err(BenchError::NotFpu);
    }
    let traj = integrate(tree, &problem, &problem.initial_state(), h, t_end, mode, sample_every.max(1))?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| {
            let e = problem.energies(x);
            EnergyRow { t, oscillatory: e.oscillatory, total: e.total_oscillatory, hamiltonian: e.hamiltonian }
        })
        .collect())
}

/// Time of the first trough of a slowly exchanging energy that carries fast
/// wiggles: once `values` has risen to `rise` times its maximum, the trough
/// is the argmin over the stretch that starts when it falls below
/// `dip` times the maximum and ends when it climbs back above `rise`.
pub fn first_trough(times: &[f64], values: &[f64], rise: f64, dip: f64) -> Option<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let up = values.iter().position(|&v| v >= rise * max)?;
    let down = up + values[up..].iter().position(|&v| v <= dip * max)?;
    let end = values[down..].iter().position(|&v| v >= rise * max).map_or(values.len(), |i| down + i);
    (down..end).min_by(|&a, &b| values[a].total_cmp(&values[b])).map(|i| times[i])
}
