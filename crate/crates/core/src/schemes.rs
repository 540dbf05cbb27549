//! Two-split scheme coefficients, composition and leaf steppers.

use std::fmt;
use std::str::FromStr;

/// Tolerance on `sum(a) == 1` and `sum(b) == 1`.
pub const CONSISTENCY_TOL: f64 = 1e-14;

/// Splitting method for two-split systems
/// `phi^R_{b_s h} o phi^L_{a_s h} o ... o phi^R_{b_1 h} o phi^L_{a_1 h}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSplitScheme {
    pub name: String,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub order: u32,
    pub self_adjoint: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SchemeError {
    #[error("unknown scheme name `{0}`")]
    UnknownName(String),
    #[error("coefficient lists differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("scheme `{0}` is not consistent")]
    Inconsistent(String),
    #[error("composition weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
}

impl TwoSplitScheme {
    /// Builds a scheme and derives its self-adjointness from the coefficient word.
    pub fn new(name: impl Into<String>, a: Vec<f64>, b: Vec<f64>, order: u32) -> Result<Self, SchemeError> {
        if a.len() != b.len() {
            return Err(SchemeError::LengthMismatch { a: a.len(), b: b.len() });
        }
        let self_adjoint = is_palindromic(&a, &b);
        Ok(TwoSplitScheme { name: name.into(), a, b, order, self_adjoint })
    }

    pub fn stages(&self) -> usize {
        self.a.len()
    }

    /// Interleaved word `a_1 b_1 a_2 b_2 ...` as `(is_left, coefficient)`.
    pub fn word(&self) -> impl Iterator<Item = (bool, f64)> + '_ {
        self.a.iter().zip(&self.b).flat_map(|(&a, &b)| [(true, a), (false, b)])
    }

    /// Coefficients used on the given side.
    pub fn side(&self, left: bool) -> &[f64] {
        if left {
            &self.a
        } else {
            &self.b
        }
    }

    pub fn nonzero(&self, left: bool) -> usize {
        self.side(left).iter().filter(|c| **c != 0.0).count()
    }
}

impl fmt::Display for TwoSplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// True when the word with zero entries removed reads the same backwards.
pub fn is_palindromic(a: &[f64], b: &[f64]) -> bool {
    let word: Vec<(bool, f64)> =
        a.iter().zip(b).flat_map(|(&a, &b)| [(true, a), (false, b)]).filter(|(_, c)| *c != 0.0).collect();
    let scale = word.iter().fold(1.0_f64, |m, (_, c)| m.max(c.abs()));
    word.iter().zip(word.iter().rev()).all(|((l1, c1), (l2, c2))| l1 == l2 && (c1 - c2).abs() <= 1e-13 * scale)
}

/// Sums of both coefficient lists equal 1 within [`CONSISTENCY_TOL`].
pub fn check_consistency(scheme: &TwoSplitScheme) -> bool {
    let sa: f64 = scheme.a.iter().sum();
    let sb: f64 = scheme.b.iter().sum();
    scheme.a.len() == scheme.b.len() && (sa - 1.0).abs() <= CONSISTENCY_TOL && (sb - 1.0).abs() <= CONSISTENCY_TOL
}

/// Weights `gamma_1, ..., gamma_s` of a composition method.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionWeights(Vec<f64>);

impl CompositionWeights {
    pub fn new(gamma: Vec<f64>) -> Result<Self, SchemeError> {
        let sum: f64 = gamma.iter().sum();
        if (sum - 1.0).abs() > CONSISTENCY_TOL {
            return Err(SchemeError::WeightsNotNormalized(sum));
        }
        Ok(CompositionWeights(gamma))
    }

    pub fn gamma(&self) -> &[f64] {
        &self.0
    }

    /// `sum_i gamma_i^q`
    pub fn power_sum(&self, q: u32) -> f64 {
        self.0.iter().map(|g| g.powi(q as i32)).sum()
    }
}

/// Triple jump: `gamma_1 = gamma_3 = 1 / (2 - 2^(1/3))`, `gamma_2 = 1 - 2 gamma_1`.
pub fn triple_jump_weights() -> CompositionWeights {
    let g1 = 1.0 / (2.0 - 2f64.cbrt());
    CompositionWeights(vec![g1, 1.0 - 2.0 * g1, g1])
}

/// Concatenates the base word scaled by every weight. With `merge_adjacent`,
/// a stage whose right coefficient is zero absorbs the next stage's left
/// coefficient (valid when the left child is an exact flow).
pub fn compose_scheme(
    base: &TwoSplitScheme,
    weights: &CompositionWeights,
    merge_adjacent: bool,
) -> Result<TwoSplitScheme, SchemeError> {
    if !check_consistency(base) {
        return Err(SchemeError::Inconsistent(base.name.clone()));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(base.stages() * weights.0.len());
    for &g in &weights.0 {
        for (&a, &b) in base.a.iter().zip(&base.b) {
            let (a, b) = (g * a, g * b);
            match pairs.last_mut() {
                Some(last) if merge_adjacent && last.1 == 0.0 => {
                    last.0 += a;
                    last.1 = b;
                }
                _ => pairs.push((a, b)),
            }
        }
    }
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();

    let p = base.order;
    let self_adjoint = is_palindromic(&a, &b);
    let mut order = p;
    if weights.0.len() > 1 && weights.power_sum(p + 1).abs() <= 1e-12 {
        order = p + 1;
        // symmetric methods have even order
        if self_adjoint && base.self_adjoint && order % 2 == 1 {
            order += 1;
        }
    }
    let name = if weights.0.len() == 1 { base.name.clone() } else { format!("{}_x{}", base.name, weights.0.len()) };
    Ok(TwoSplitScheme { name, a, b, order, self_adjoint })
}

/// Schemes available by name in tree configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltinScheme {
    LieTrotter,
    Strang,
    Yoshida9,
    Yoshida7,
    Omf4,
}

impl BuiltinScheme {
    pub const ALL: [BuiltinScheme; 5] = [
        BuiltinScheme::LieTrotter,
        BuiltinScheme::Strang,
        BuiltinScheme::Yoshida9,
        BuiltinScheme::Yoshida7,
        BuiltinScheme::Omf4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinScheme::LieTrotter => "lie_trotter",
            BuiltinScheme::Strang => "strang",
            BuiltinScheme::Yoshida9 => "yoshida9",
            BuiltinScheme::Yoshida7 => "yoshida7",
            BuiltinScheme::Omf4 => "omf4",
        }
    }

    pub fn scheme(self) -> TwoSplitScheme {
        let named = |mut s: TwoSplitScheme, order: u32| {
            s.name = self.name().to_string();
            s.order = order;
            s
        };
        match self {
            BuiltinScheme::LieTrotter => {
                TwoSplitScheme { name: self.name().into(), a: vec![1.0], b: vec![1.0], order: 1, self_adjoint: false }
            }
            BuiltinScheme::Strang => TwoSplitScheme {
                name: self.name().into(),
                a: vec![0.5, 0.5],
                b: vec![1.0, 0.0],
                order: 2,
                self_adjoint: true,
            },
            BuiltinScheme::Yoshida9 => {
                let s = compose_scheme(&BuiltinScheme::Strang.scheme(), &triple_jump_weights(), false)
                    .expect("strang is consistent");
                named(s, 4)
            }
            BuiltinScheme::Yoshida7 => {
                let s = compose_scheme(&BuiltinScheme::Strang.scheme(), &triple_jump_weights(), true)
                    .expect("strang is consistent");
                named(s, 4)
            }
            BuiltinScheme::Omf4 => {
                let a2 = 0.253978510841060;
                let a3 = -0.032302867652700;
                let a4 = 1.0 - 2.0 * (a2 + a3);
                let b1 = 0.083983152628767;
                let b2 = 0.682236533571909;
                let b3 = 0.5 - (b1 + b2);
                TwoSplitScheme {
                    name: self.name().into(),
                    a: vec![0.0, a2, a3, a4, a3, a2],
                    b: vec![b1, b2, b3, b3, b2, b1],
                    order: 4,
                    self_adjoint: true,
                }
            }
        }
    }
}

impl FromStr for BuiltinScheme {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BuiltinScheme::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| SchemeError::UnknownName(s.to_string()))
    }
}

pub fn builtin_scheme(name: &str) -> Result<TwoSplitScheme, SchemeError> {
    Ok(name.parse::<BuiltinScheme>()?.scheme())
}

/// Explicit Runge-Kutta steppers for leaves without an exact flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LeafStepper {
    Euler,
    Midpoint,
    Rk4,
}

impl LeafStepper {
    pub const ALL: [LeafStepper; 3] = [LeafStepper::Euler, LeafStepper::Midpoint, LeafStepper::Rk4];

    pub fn name(self) -> &'static str {
        match self {
            LeafStepper::Euler => "euler",
            LeafStepper::Midpoint => "midpoint",
            LeafStepper::Rk4 => "rk4",
        }
    }

    pub fn order(self) -> u32 {
        match self {
            LeafStepper::Euler => 1,
            LeafStepper::Midpoint => 2,
            LeafStepper::Rk4 => 4,
        }
    }

    /// Vector-field evaluations per step.
    pub fn stages(self) -> usize {
        match self {
            LeafStepper::Euler => 1,
            LeafStepper::Midpoint => 2,
            LeafStepper::Rk4 => 4,
        }
    }

    pub fn self_adjoint(self) -> bool {
        false
    }

    /// One step of size `h` for `x' = f(x)`.
    pub fn step<F: FnMut(&[f64], &mut [f64])>(self, mut f: F, h: f64, x: &mut [f64]) {
        let d = x.len();
        match self {
            LeafStepper::Euler => {
                let mut k = vec![0.0; d];
                f(x, &mut k);
                x.iter_mut().zip(&k).for_each(|(x, k)| *x += h * k);
            }
            LeafStepper::Midpoint => {
                let mut k = vec![0.0; d];
                f(x, &mut k);
                let mid: Vec<f64> = x.iter().zip(&k).map(|(x, k)| x + 0.5 * h * k).collect();
                f(&mid, &mut k);
                x.iter_mut().zip(&k).for_each(|(x, k)| *x += h * k);
            }
            LeafStepper::Rk4 => {
                let mut k1 = vec![0.0; d];
                let mut k2 = vec![0.0; d];
                let mut k3 = vec![0.0; d];
                let mut k4 = vec![0.0; d];
                let mut tmp = vec![0.0; d];
                f(x, &mut k1);
                for i in 0..d {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                f(&tmp, &mut k2);
                for i in 0..d {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                f(&tmp, &mut k3);
                for i in 0..d {
                    tmp[i] = x[i] + h * k3[i];
                }
                f(&tmp, &mut k4);
                for i in 0..d {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }
}

impl FromStr for LeafStepper {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LeafStepper::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| SchemeError::UnknownName(s.to_string()))
    }
}
