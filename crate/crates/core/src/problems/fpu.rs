use crate::engine::{EngineError, Problem};
use crate::tree::SubsetMask;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpuParams {
    /// Number of stiff springs.
    pub m: usize,
    /// Frequency of the stiff springs.
    pub omega: f64,
}

impl Default for FpuParams {
    fn default() -> Self {
        FpuParams { m: 3, omega: 50.0 }
    }
}

/// Modified Fermi-Pasta-Ulam chain as a separable Hamiltonian
/// `H = T^s(p^s) + T^f(p^f) + V^f(q^f) + V^s(q^s, q^f)`.
///
/// The state is laid out as `(p^s | p^f | q^s | q^f)`, each block of length
/// `m`. Partitions: 1 = `T^s`, 2 = `T^f`, 3 = `V^f`, 4 = `V^s`; every
/// elementary flow is a drift or a kick and is computed exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FpuProblem {
    pub params: FpuParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FpuEnergies {
    pub hamiltonian: f64,
    /// Oscillatory energy of each stiff spring.
    pub oscillatory: Vec<f64>,
    pub total_oscillatory: f64,
}

impl FpuProblem {
    pub fn new(params: FpuParams) -> Self {
        assert!(params.m >= 1, "at least one stiff spring");
        assert!(params.omega > 0.0, "omega must be positive");
        FpuProblem { params }
    }

    /// `q^s_1 = 1, p^s_1 = 1, q^f_1 = 1/omega, p^f_1 = 1`, all else zero.
    pub fn initial_state(&self) -> Vec<f64> {
        let m = self.params.m;
        let mut x = vec![0.0; 4 * m];
        x[0] = 1.0;
        x[m] = 1.0;
        x[2 * m] = 1.0;
        x[3 * m] = 1.0 / self.params.omega;
        x
    }

    fn blocks(&self, x: &[f64]) -> (usize, usize, usize, usize) {
        let m = self.params.m;
        debug_assert_eq!(x.len(), 4 * m);
        (0, m, 2 * m, 3 * m)
    }

    /// Arguments of the quartic terms of `V^s`.
    fn stretches(&self, qs: &[f64], qf: &[f64]) -> Vec<f64> {
        let m = self.params.m;
        let mut u = Vec::with_capacity(m + 1);
        u.push(qs[0] - qf[0]);
        for i in 0..m - 1 {
            u.push(qs[i + 1] - qf[i + 1] - qs[i] - qf[i]);
        }
        u.push(qs[m - 1] + qf[m - 1]);
        u
    }

    pub fn soft_potential(&self, x: &[f64]) -> f64 {
        let (_, _, qs, qf) = self.blocks(x);
        let m = self.params.m;
        0.25 * self.stretches(&x[qs..qs + m], &x[qf..qf + m]).iter().map(|u| u.powi(4)).sum::<f64>()
    }

    /// `(dV^s/dq^s, dV^s/dq^f)`
    pub fn soft_gradient(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (_, _, qs, qf) = self.blocks(x);
        let m = self.params.m;
        let u3: Vec<f64> = self.stretches(&x[qs..qs + m], &x[qf..qf + m]).iter().map(|u| u.powi(3)).collect();
        let mut gs = vec![0.0; m];
        let mut gf = vec![0.0; m];
        gs[0] += u3[0];
        gf[0] -= u3[0];
        for i in 0..m - 1 {
            let t = u3[i + 1];
            gs[i + 1] += t;
            gf[i + 1] -= t;
            gs[i] -= t;
            gf[i] -= t;
        }
        gs[m - 1] += u3[m];
        gf[m - 1] += u3[m];
        (gs, gf)
    }

    pub fn energies(&self, x: &[f64]) -> FpuEnergies {
        let (ps, pf, _, qf) = self.blocks(x);
        let m = self.params.m;
        let w2 = self.params.omega * self.params.omega;
        let oscillatory: Vec<f64> =
            (0..m).map(|j| 0.5 * x[pf + j] * x[pf + j] + 0.5 * w2 * x[qf + j] * x[qf + j]).collect();
        let total_oscillatory = oscillatory.iter().sum();
        let kinetic_slow: f64 = 0.5 * x[ps..ps + m].iter().map(|p| p * p).sum::<f64>();
        let hamiltonian = kinetic_slow + total_oscillatory + self.soft_potential(x);
        FpuEnergies { hamiltonian, oscillatory, total_oscillatory }
    }
}

impl Problem for FpuProblem {
    fn n_partitions(&self) -> usize {
        4
    }

    fn dim(&self) -> usize {
        4 * self.params.m
    }

    fn field(&self, part: usize, x: &[f64], dx: &mut [f64]) {
        let m = self.params.m;
        let (ps, pf, qs, qf) = self.blocks(x);
        dx.fill(0.0);
        match part {
            1 => dx[qs..qs + m].copy_from_slice(&x[ps..ps + m]),
            2 => dx[qf..qf + m].copy_from_slice(&x[pf..pf + m]),
            3 => {
                let w2 = self.params.omega * self.params.omega;
                for j in 0..m {
                    dx[pf + j] = -w2 * x[qf + j];
                }
            }
            4 => {
                let (gs, gf) = self.soft_gradient(x);
                for j in 0..m {
                    dx[ps + j] = -gs[j];
                    dx[pf + j] = -gf[j];
                }
            }
            _ => panic!("FPU has partitions 1..=4, got {part}"),
        }
    }

    fn exact_flow(&self, part: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
        let m = self.params.m;
        let (ps, pf, qs, qf) = self.blocks(x);
        match part {
            1 => (0..m).for_each(|j| x[qs + j] += h * x[ps + j]),
            2 => (0..m).for_each(|j| x[qf + j] += h * x[pf + j]),
            3 => {
                let w2 = self.params.omega * self.params.omega;
                (0..m).for_each(|j| x[pf + j] -= h * w2 * x[qf + j]);
            }
            4 => {
                let (gs, gf) = self.soft_gradient(x);
                for j in 0..m {
                    x[ps + j] -= h * gs[j];
                    x[pf + j] -= h * gf[j];
                }
            }
            _ => panic!("FPU has partitions 1..=4, got {part}"),
        }
        Ok(())
    }

    fn observables(&self, x: &[f64]) -> Vec<(String, f64)> {
        let e = self.energies(x);
        let mut out: Vec<(String, f64)> =
            e.oscillatory.iter().enumerate().map(|(j, v)| (format!("I{}", j + 1), *v)).collect();
        out.push(("I_total".to_string(), e.total_oscillatory));
        out.push(("H".to_string(), e.hamiltonian));
        out
    }

    /// `T^f` and `V^f`.
    fn fast_partitions(&self) -> SubsetMask {
        SubsetMask::from_indices([2, 3])
    }
}
