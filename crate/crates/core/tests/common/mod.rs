#![allow(dead_code)]

use hsplit::engine::{EngineError, Problem};
use hsplit::problems::FpuProblem;
use hsplit::schemes::{BuiltinScheme, LeafStepper};
use hsplit::tree::{NodeSpec, SplittingTree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `N >= 2` coupled shears: partition `m` moves `x_m` by `sin(x_{m+1})`
/// (cyclically), so each flow is exact and no two neighbours commute.
pub struct Shear(pub usize);

impl Problem for Shear {
    fn n_partitions(&self) -> usize {
        self.0
    }
    fn dim(&self) -> usize {
        self.0
    }
    fn field(&self, m: usize, x: &[f64], dx: &mut [f64]) {
        dx.fill(0.0);
        dx[m - 1] = x[m % self.0].sin();
    }
    fn exact_flow(&self, m: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
        x[m - 1] += h * x[m % self.0].sin();
        Ok(())
    }
}

pub fn shear_state(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.3 + 0.7 * i as f64).collect()
}

/// Random tree over `{1..n}` of depth at most `max_depth`, random builtin
/// schemes, random multirate factors in `1..=max_k`, and an occasional
/// numeric leaf.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, max_depth: usize, max_k: u32) -> SplittingTree {
    let mut parts: Vec<usize> = (1..=n).collect();
    parts.shuffle(rng);
    SplittingTree::build(n, random_spec(rng, &parts, max_depth, max_k).with_k(1)).expect("generated tree is valid")
}

fn random_spec<R: Rng>(rng: &mut R, parts: &[usize], budget: usize, max_k: u32) -> NodeSpec {
    if parts.len() == 1 {
        return if rng.gen_bool(0.2) {
            let stepper = *[LeafStepper::Euler, LeafStepper::Midpoint, LeafStepper::Rk4].choose(rng).unwrap();
            NodeSpec::numeric(parts[0], stepper).with_k(rng.gen_range(1..=max_k))
        } else {
            NodeSpec::exact(parts[0])
        };
    }
    // both halves must fit into the remaining depth
    let cap = 1usize << (budget - 1);
    let lo = parts.len().saturating_sub(cap).max(1);
    let hi = cap.min(parts.len() - 1);
    let split = rng.gen_range(lo..=hi);
    let scheme = BuiltinScheme::ALL.choose(rng).unwrap().scheme();
    let left = random_spec(rng, &parts[..split], budget - 1, max_k);
    let right = random_spec(rng, &parts[split..], budget - 1, max_k);
    NodeSpec::inner(scheme, left, right).with_k(rng.gen_range(1..=max_k))
}

/// Largest relative deviation of the soft-potential gradient from central
/// differences over `samples` random states.
pub fn gradient_fd_error(samples: usize, seed: u64) -> f64 {
    let p = FpuProblem::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let (gs, gf) = p.soft_gradient(&x);
        let analytic: Vec<f64> = gs.into_iter().chain(gf).collect();
        let eps = 1e-5;
        let fd: Vec<f64> = (6..12)
            .map(|i| {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += eps;
                b[i] -= eps;
                (p.soft_potential(&a) - p.soft_potential(&b)) / (2.0 * eps)
            })
            .collect();
        let num: f64 = analytic.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let den: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(num / den);
    }
    worst
}
