//! Dormand-Prince 5(4) with a PI step-size controller, applied to the full
//! right-hand side. Used to compute reference solutions.

use crate::engine::Problem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceOptions {
    pub atol: f64,
    pub rtol: f64,
    pub safety: f64,
    /// Bounds on `h_new / h`.
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// PI stabilisation exponent.
    pub beta: f64,
    pub max_steps: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            atol: 1e-14,
            rtol: 1e-12,
            safety: 0.9,
            min_ratio: 0.2,
            max_ratio: 10.0,
            beta: 0.04,
            max_steps: 100_000_000,
        }
    }
}

impl ReferenceOptions {
    pub fn with_tolerances(atol: f64, rtol: f64) -> Self {
        ReferenceOptions { atol, rtol, ..Default::default() }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReferenceError {
    #[error("tolerances must be positive")]
    InvalidTolerance,
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step limit reached at t = {t}")]
    TooManySteps { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// difference between the 5th and 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `x' = sum_m f_m(x)` from `t = 0` to `t_end`.
pub fn reference_solve<P: Problem + ?Sized>(
    problem: &P,
    x0: &[f64],
    t_end: f64,
    opts: &ReferenceOptions,
) -> Result<Vec<f64>, ReferenceError> {
    if !(opts.atol > 0.0 && opts.rtol > 0.0) {
        return Err(ReferenceError::InvalidTolerance);
    }
    let n = x0.len();
    let mut y = x0.to_vec();
    if t_end == 0.0 {
        return Ok(y);
    }
    let dir = t_end.signum();
    let f = |x: &[f64], dx: &mut [f64]| problem.full_field(x, dx);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    f(&y, &mut k1);
    let mut h = dir * initial_step(&f, &y, &k1, t_end.abs(), opts);
    let mut t = 0.0;
    let mut err_old: f64 = 1e-4;
    let expo = 0.2 - 0.75 * opts.beta;
    let mut last_rejected = false;

    for _ in 0..opts.max_steps {
        if (t_end - t) * dir <= 0.0 {
            return Ok(y);
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        if h.abs() <= 10.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(ReferenceError::StepSizeUnderflow { t });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f(&ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(&ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(&ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(&ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(&ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(&ynew, &mut k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sk) * (e / sk);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(ReferenceError::NonFinite { t });
        }

        // h_new = h * ratio, ratio = safety * err^-expo * err_old^beta
        let fac11 = err.powf(expo);
        if err <= 1.0 {
            let ratio = (opts.safety / (fac11 / err_old.powf(opts.beta))).clamp(opts.min_ratio, opts.max_ratio);
            let ratio = if last_rejected { ratio.min(1.0) } else { ratio };
            err_old = err.max(1e-4);
            t += h;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            h *= ratio;
            last_rejected = false;
        } else {
            h *= (opts.safety / fac11).max(opts.min_ratio);
            last_rejected = true;
        }
    }
    Err(ReferenceError::TooManySteps { t })
}

fn initial_step<F: Fn(&[f64], &mut [f64])>(f: &F, y: &[f64], f0: &[f64], span: f64, opts: &ReferenceOptions) -> f64 {
    let n = y.len() as f64;
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y.len()];
    f(&y1, &mut f1);
    let d2 =
        (f1.iter().zip(f0).enumerate().map(|(i, (a, b))| ((a - b) / scale(i)).powi(2)).sum::<f64>() / n).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span)
}
