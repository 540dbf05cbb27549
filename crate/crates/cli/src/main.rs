use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hsplit::analysis::{error_scaling_factor, flow_eval_counts, min_multirate_factor};
use hsplit::bench::{
    choose_mode, energy_trace, fixture_tree, run_experiment, BenchRecord, EnergyRow, KChoice, MethodRun, ProblemKind,
    RunOptions, CSV_HEADER,
};
use hsplit::tree::NodeKind;
use hsplit::{parse_tree_config, SplittingTree};

#[derive(Parser)]
#[command(name = "hsplit", version, about = "Hierarchical splitting experiments with CSV output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Global error against a reference solution for a list of step sizes.
    Convergence(ConvergenceArgs),
    /// Error and flow-evaluation cost for several trees.
    Workprecision(WorkPrecisionArgs),
    /// Oscillatory and total energies of an FPU run.
    Energy(EnergyArgs),
    /// Validation, evaluation counts and error scaling factors of a tree.
    TreeInfo(TreeInfoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

#[derive(Args)]
struct Common {
    /// rigid-body or fpu; inferred from the partition count when omitted.
    #[arg(long)]
    problem: Option<ProblemKind>,
    /// Final time [default: 100 for rigid-body, 220 for fpu].
    #[arg(long, value_parser = parse_real)]
    t_end: Option<f64>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reserved; all experiments are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Leave the wall_ms column empty so the output is reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// Tree file, or the name of a shipped fixture.
    #[arg(long)]
    tree: String,
    /// Step sizes; fractions like 1/7 are accepted.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_real)]
    h: Vec<f64>,
    /// Multirate factor for the fast edges: an integer, `1/h`, or `tree`.
    #[arg(long, default_value = "tree")]
    k: KChoice,
    /// Reweighted multirate factors. Singlerate trees run singlerate when omitted.
    #[arg(long)]
    reweight: Option<OnOff>,
    /// Method label [default: tree file stem].
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct WorkPrecisionArgs {
    /// Tree files or fixture names, one method each.
    #[arg(long, value_delimiter = ',', required = true)]
    tree: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_real)]
    h: Vec<f64>,
    /// One factor for all trees or one per tree.
    #[arg(long, value_delimiter = ',')]
    k: Vec<KChoice>,
    /// One setting for all trees or one per tree.
    #[arg(long, value_delimiter = ',')]
    reweight: Vec<OnOff>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(long)]
    tree: String,
    #[arg(long, value_parser = parse_real)]
    h: f64,
    #[arg(long, default_value = "tree")]
    k: KChoice,
    #[arg(long)]
    reweight: Option<OnOff>,
    /// Sample every n-th step (the final state is always included).
    #[arg(long, default_value_t = 1)]
    sample_every: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TreeInfoArgs {
    #[arg(long)]
    tree: String,
    /// Smallest step size for the minimum multirate factor table.
    #[arg(long, value_parser = parse_real)]
    hmin: Option<f64>,
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("invalid number `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("invalid number `{s}`"))?;
            a / b
        }
        None => s.trim().parse().map_err(|_| format!("invalid number `{s}`"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// A readable file path wins over a fixture of the same name.
fn load_tree(arg: &str) -> Result<(String, SplittingTree)> {
    let path = Path::new(arg);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg).to_string();
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        let tree = parse_tree_config(&text).with_context(|| format!("in {arg}"))?;
        return Ok((stem, tree));
    }
    let tree = fixture_tree(arg).with_context(|| format!("{arg} is neither a file nor a shipped tree"))?;
    Ok((stem, tree))
}

fn problem_for(tree: &SplittingTree, given: Option<ProblemKind>) -> Result<ProblemKind> {
    match (given, tree.n_partitions()) {
        (Some(p), _) => Ok(p),
        (None, 3) => Ok(ProblemKind::RigidBody),
        (None, 4) => Ok(ProblemKind::Fpu),
        (None, n) => bail!("cannot infer a problem for a tree with {n} partitions; pass --problem"),
    }
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_options(common: &Common, kind: ProblemKind) -> RunOptions {
    let t_end = common.t_end.unwrap_or(kind.default_t_end());
    let parallel = std::thread::available_parallelism().is_ok_and(|n| n.get() > 1);
    RunOptions { timing: !common.no_timing, parallel, ..RunOptions::new(t_end) }
}

fn write_records(common: &Common, rows: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(&common.out)?);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Returns whether every row converged.
fn convergence(args: ConvergenceArgs) -> Result<bool> {
    let (name, tree) = load_tree(&args.tree)?;
    let kind = problem_for(&tree, args.common.problem)?;
    let run = MethodRun::new(args.method.unwrap_or_else(|| name.clone()), name, tree)
        .with_k(args.k)
        .with_reweight(args.reweight.map(bool::from));
    let rows = run_experiment("convergence", kind, &[run], &args.h, &run_options(&args.common, kind))?;
    write_records(&args.common, &rows)?;
    match rows.first().and_then(|r| r.slope) {
        Some(s) => eprintln!("slope: {s:.4}"),
        None => eprintln!("slope: n/a"),
    }
    Ok(rows.iter().all(|r| !r.diverged()))
}

/// Expands a per-tree option given once or once per tree.
fn per_tree<T: Copy>(values: &[T], n: usize, default: T, flag: &str) -> Result<Vec<T>> {
    match values.len() {
        0 => Ok(vec![default; n]),
        1 => Ok(vec![values[0]; n]),
        m if m == n => Ok(values.to_vec()),
        m => bail!("--{flag} has {m} values for {n} trees"),
    }
}

fn workprecision(args: WorkPrecisionArgs) -> Result<bool> {
    let n = args.tree.len();
    let ks = per_tree(&args.k, n, KChoice::Tree, "k")?;
    let reweights: Vec<Option<bool>> = match args.reweight.len() {
        0 => vec![None; n],
        _ => per_tree(&args.reweight, n, OnOff::On, "reweight")?.into_iter().map(|r| Some(r.into())).collect(),
    };
    let mut runs = Vec::with_capacity(n);
    let mut kind = args.common.problem;
    for ((arg, k), reweight) in args.tree.iter().zip(ks).zip(reweights) {
        let (name, tree) = load_tree(arg)?;
        let this = problem_for(&tree, kind)?;
        if kind.is_some_and(|p| p != this) {
            bail!("{arg} belongs to a different problem than the other trees");
        }
        kind = Some(this);
        runs.push(MethodRun::new(name.clone(), name, tree).with_k(k).with_reweight(reweight));
    }
    let kind = kind.expect("at least one tree");
    let rows = run_experiment("workprecision", kind, &runs, &args.h, &run_options(&args.common, kind))?;
    write_records(&args.common, &rows)?;
    Ok(rows.iter().all(|r| !r.diverged()))
}

fn energy(args: EnergyArgs) -> Result<bool> {
    let (_, tree) = load_tree(&args.tree)?;
    let kind = problem_for(&tree, args.common.problem)?;
    if kind != ProblemKind::Fpu {
        bail!("energy traces need --problem fpu");
    }
    let tree = match args.k.resolve(args.h) {
        Some(k) => tree.with_fast_factor(k),
        None => tree,
    };
    let mode = choose_mode(&tree, args.reweight.map(bool::from));
    let t_end = args.common.t_end.unwrap_or(kind.default_t_end());
    let rows = match energy_trace(&tree, mode, args.h, t_end, args.sample_every) {
        Ok(rows) => rows,
        Err(hsplit::bench::BenchError::Engine(e @ hsplit::EngineError::Divergence { .. })) => {
            eprintln!("diverged: {e}");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    let m = rows.first().map_or(0, |r| r.oscillatory.len());
    let mut w = csv::Writer::from_writer(output(&args.common.out)?);
    w.write_record(EnergyRow::csv_header(m))?;
    for r in &rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(true)
}

fn node_label(tree: &SplittingTree, id: hsplit::NodeId) -> String {
    let node = tree.node(id);
    match &node.kind {
        NodeKind::Inner { scheme, .. } => scheme.name.clone(),
        NodeKind::LeafExact => "exact".into(),
        NodeKind::LeafNumeric { stepper, order } => format!("{}(p={order})", stepper.name()),
    }
}

fn tree_info(args: TreeInfoArgs) -> Result<bool> {
    let (name, tree) = load_tree(&args.tree)?;
    let mut out = io::stdout().lock();
    writeln!(out, "tree: {name}")?;
    writeln!(out, "partitions: {}, nodes: {}", tree.n_partitions(), tree.len())?;
    writeln!(out, "valid: yes")?;
    writeln!(out, "self-adjoint: {}", if tree.is_self_adjoint() { "yes" } else { "no" })?;
    writeln!(out)?;
    writeln!(
        out,
        "{:<5} {:<16} {:<14} {:>4} {:>8} {:>24} {:>24}",
        "node", "subset", "method", "k", "calls", "scale p=1", "scale p=2"
    )?;
    let counts = flow_eval_counts(&tree);
    for node in tree.nodes() {
        let scale = |p| error_scaling_factor(&tree, node.id, p).map(|f| format!("{f:.16e}"));
        writeln!(
            out,
            "{:<5} {:<16} {:<14} {:>4} {:>8} {:>24} {:>24}",
            node.id.to_string(),
            node.subset.to_string(),
            node_label(&tree, node.id),
            node.multirate_factor,
            counts[node.id.0],
            scale(1)?,
            scale(2)?
        )?;
    }
    if let Some(h_min) = args.hmin {
        let p_root = tree.node(tree.root()).order().unwrap_or(1);
        writeln!(out)?;
        writeln!(out, "minimum multirate factors for h >= {h_min} (root order {p_root}):")?;
        for node in tree.nodes().iter().filter(|n| n.id != tree.root()) {
            if let Some(p) = node.order() {
                let k = min_multirate_factor(p, p_root, h_min)?;
                writeln!(
                    out,
                    "  {:<5} {:<16} order {p}: k >= {:.3} (integer {})",
                    node.id.to_string(),
                    node.subset.to_string(),
                    k,
                    k.ceil()
                )?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convergence(a) => convergence(a),
        Command::Workprecision(a) => workprecision(a),
        Command::Energy(a) => energy(a),
        Command::TreeInfo(a) => tree_info(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        // some run diverged; its rows are marked with error = nan
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
