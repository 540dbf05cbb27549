use crate::engine::{EngineError, Problem};

/// Principal moments of inertia.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidBodyParams {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl Default for RigidBodyParams {
    fn default() -> Self {
        RigidBodyParams { i1: 2.0, i2: 1.0, i3: 2.0 / 3.0 }
    }
}

/// Free rigid body `x' = (A_1(x) + A_2(x) + A_3(x)) x` split into the three
/// skew-symmetric generators of so(3). Each elementary flow is a rotation
/// about one coordinate axis by the angle `h x_m / I_m`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RigidBody {
    pub params: RigidBodyParams,
}

impl RigidBody {
    pub fn new(params: RigidBodyParams) -> Self {
        assert!(params.i1 > 0.0 && params.i2 > 0.0 && params.i3 > 0.0, "moments of inertia must be positive");
        RigidBody { params }
    }

    /// `(cos 1.1, 0, sin 1.1)`
    pub fn initial_state(&self) -> Vec<f64> {
        vec![1.1f64.cos(), 0.0, 1.1f64.sin()]
    }

    fn inertia(&self, m: usize) -> f64 {
        match m {
            1 => self.params.i1,
            2 => self.params.i2,
            3 => self.params.i3,
            _ => panic!("rigid body has partitions 1..=3, got {m}"),
        }
    }

    /// Kinetic energy `sum x_i^2 / (2 I_i)`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        (1..=3).map(|m| x[m - 1] * x[m - 1] / (2.0 * self.inertia(m))).sum()
    }
}

impl Problem for RigidBody {
    fn n_partitions(&self) -> usize {
        3
    }

    fn dim(&self) -> usize {
        3
    }

    fn field(&self, m: usize, x: &[f64], dx: &mut [f64]) {
        let w = x[m - 1] / self.inertia(m);
        match m {
            1 => {
                dx[0] = 0.0;
                dx[1] = w * x[2];
                dx[2] = -w * x[1];
            }
            2 => {
                dx[0] = -w * x[2];
                dx[1] = 0.0;
                dx[2] = w * x[0];
            }
            _ => {
                dx[0] = w * x[1];
                dx[1] = -w * x[0];
                dx[2] = 0.0;
            }
        }
    }

    fn exact_flow(&self, m: usize, h: f64, x: &mut [f64]) -> Result<(), EngineError> {
        let (s, c) = (h * x[m - 1] / self.inertia(m)).sin_cos();
        // (i, j) is the rotated pair with i' = w x_j, j' = -w x_i
        let (i, j) = match m {
            1 => (1, 2),
            2 => (2, 0),
            _ => (0, 1),
        };
        let (xi, xj) = (x[i], x[j]);
        x[i] = c * xi + s * xj;
        x[j] = -s * xi + c * xj;
        Ok(())
    }

    fn observables(&self, x: &[f64]) -> Vec<(String, f64)> {
        vec![("norm".to_string(), x.iter().map(|v| v * v).sum::<f64>().sqrt()), ("energy".to_string(), self.energy(x))]
    }
}
