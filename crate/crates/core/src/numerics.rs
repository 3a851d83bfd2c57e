//! Shared numerical kernels: finite differences, RK4 flows, adaptive Simpson
//! quadrature, safeguarded monotone inversion, monotone cubic interpolation
//! and a handful of special functions.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{Matrix, Point};
use crate::smooth::{SmoothMap, VectorField};

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_RK4_STEPS: usize = 1000;

/// Step sizes and tolerances used across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceProfile {
    pub fd_step: f64,
    pub residual_tol: f64,
    pub quad_tol: f64,
    pub root_tol: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self { fd_step: 1e-5, residual_tol: 1e-6, quad_tol: 1e-10, root_tol: 1e-12 }
    }
}

impl ToleranceProfile {
    pub fn validate(&self) -> Result<()> {
        let all = [self.fd_step, self.residual_tol, self.quad_tol, self.root_tol];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(LabError::Argument(format!("tolerances must be strictly positive: {self:?}")))
        }
    }
}

/// Central-difference Jacobian, entry (i, j) = (f_i(x + h e_j) − f_i(x − h e_j)) / 2h.
pub fn fd_jacobian<M: SmoothMap + ?Sized>(map: &M, x: &[f64], h: f64) -> Result<Matrix> {
    let d = x.len();
    let mut jac = Matrix::zeros(d, d);
    let mut probe = x.to_vec();
    for j in 0..d {
        probe[j] = x[j] + h;
        let plus = map.eval(&probe)?;
        probe[j] = x[j] - h;
        let minus = map.eval(&probe)?;
        probe[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Σ_i ∂_i X_i(t, x) by central differences.
pub fn fd_divergence<F: VectorField + ?Sized>(field: &F, t: f64, x: &[f64], h: f64) -> Result<f64> {
    let mut probe = x.to_vec();
    let mut div = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = field.eval(t, &probe)?[i];
        probe[i] = x[i] - h;
        let minus = field.eval(t, &probe)?[i];
        probe[i] = x[i];
        div += (plus - minus) / (2.0 * h);
    }
    Ok(div)
}

fn field_at<F: VectorField + ?Sized>(field: &F, t: f64, x: &[f64]) -> Result<Point> {
    let v = field.eval(t, x).map_err(|e| LabError::Integration { time: t, reason: e.to_string() })?;
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(LabError::Integration { time: t, reason: format!("non-finite field value at {x:?}") })
    }
}

/// Classical fixed-step RK4 approximation of the flow Φ_{t1}(x0) with Φ_{t0}(x0) = x0.
/// `t1 < t0` integrates backwards.
pub fn rk4_flow<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Point> {
    if steps == 0 {
        return Err(LabError::Argument("rk4_flow needs at least one step".into()));
    }
    let d = x0.len();
    let h = (t1 - t0) / steps as f64;
    let mut x = x0.to_vec();
    let mut tmp = vec![0.0; d];
    for n in 0..steps {
        let t = t0 + n as f64 * h;
        let k1 = field_at(field, t, &x)?;
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        let k2 = field_at(field, t + 0.5 * h, &tmp)?;
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        let k3 = field_at(field, t + 0.5 * h, &tmp)?;
        for i in 0..d {
            tmp[i] = x[i] + h * k3[i];
        }
        let k4 = field_at(field, t + h, &tmp)?;
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(x)
}

const QUAD_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over [a, b] to absolute error `tol`.
pub fn quad_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a < b) {
        if a == b {
            return Ok(0.0);
        }
        return Err(LabError::Argument(format!("quadrature needs a < b, got [{a}, {b}]")));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LabError::Precision(format!("non-finite integral over [{a}, {b}]")))
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) < 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(LabError::Precision(format!(
            "adaptive Simpson subdivision limit reached on [{a}, {b}]"
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Solves f(x) = y for strictly increasing `f` on the caller-supplied bracket.
///
/// Bisection safeguarded Newton: Newton steps are taken when `df` is supplied
/// and the step stays inside the current bracket.
pub fn inverse_monotone(
    f: impl Fn(f64) -> f64,
    df: Option<&dyn Fn(f64) -> f64>,
    y: f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    if !(lo <= hi) || !y.is_finite() {
        return Err(LabError::Range { value: y, lo, hi });
    }
    let (flo, fhi) = (f(lo), f(hi));
    if y < flo - tol || y > fhi + tol {
        return Err(LabError::Range { value: y, lo: flo, hi: fhi });
    }
    if (flo - y).abs() <= tol {
        return Ok(lo);
    }
    if (fhi - y).abs() <= tol {
        return Ok(hi);
    }
    refine_monotone(&f, df, y, lo, hi, 0.5 * (lo + hi), tol)
}

/// As [`inverse_monotone`], starting from a caller-supplied guess inside the
/// bracket (typically from a tabulated interpolant). The bracket must already
/// satisfy f(lo) ≤ y ≤ f(hi).
pub fn inverse_monotone_from(
    f: impl Fn(f64) -> f64,
    df: Option<&dyn Fn(f64) -> f64>,
    y: f64,
    lo: f64,
    hi: f64,
    guess: f64,
    tol: f64,
) -> Result<f64> {
    let x0 = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
    refine_monotone(&f, df, y, lo, hi, x0, tol)
}

fn refine_monotone(
    f: &impl Fn(f64) -> f64,
    df: Option<&dyn Fn(f64) -> f64>,
    y: f64,
    lo: f64,
    hi: f64,
    start: f64,
    tol: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let mut x = start;
    for _ in 0..300 {
        let fx = f(x) - y;
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a <= f64::EPSILON * x.abs().max(1e-300) * 2.0 {
            return Ok(x);
        }
        let newton = df.map(|d| x - fx / d(x)).filter(|n| n.is_finite() && *n > a && *n < b);
        x = newton.unwrap_or(0.5 * (a + b));
    }
    Err(LabError::Precision(format!("monotone inversion did not converge for y = {y}")))
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// `xs` strictly increasing, `ys` monotone (non-decreasing).
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(LabError::Argument("monotone cubic needs ≥ 2 matching knots".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Argument("interpolation knots must be strictly increasing".into()));
        }
        let secants: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for k in 1..n - 1 {
            let (s0, s1) = (secants[k - 1], secants[k]);
            slopes[k] = if s0 * s1 <= 0.0 {
                0.0
            } else {
                let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
                let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
                (w1 + w2) / (w1 / s0 + w2 / s1)
            };
        }
        Ok(Self { xs, ys, slopes })
    }

    /// Index k with xs[k] ≤ x < xs[k+1], clamped to the table.
    pub fn segment(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&v| v <= x);
        k.clamp(1, self.xs.len() - 1) - 1
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = ((x - self.xs[k]) / h).clamp(0.0, 1.0);
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.slopes[k] + h01 * self.ys[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) by the Lanczos approximation (g = 7), with reflection for x < 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        let series = LANCZOS_COEFFS[1..]
            .iter()
            .enumerate()
            .fold(LANCZOS_COEFFS[0], |acc, (k, c)| acc + c / (x + k as f64 + 1.0));
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * series
    }
}

/// Volume ω_d = π^{d/2} / Γ(d/2 + 1) of the unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    std::f64::consts::PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0)
}

const HALTON_PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// The `index`-th Halton point in [0, 1)^d (d ≤ 16).
pub fn halton_point(index: u64, d: usize) -> Point {
    HALTON_PRIMES[..d].iter().map(|&b| halton(index, b)).collect()
}

/// Pairwise (cascade) summation: fixed reduction order, O(log n) error growth.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and its standard error.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::{FnField, FnMap};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn fd_jacobian_identity_and_linear() {
        let id = FnMap::new(3, "id", |x| Ok(x.to_vec()));
        let j = fd_jacobian(&id, &[0.3, -1.0, 2.0], 1e-5).unwrap();
        assert!(j.max_abs_diff(&Matrix::identity(3)) < 1e-10);

        let lin = FnMap::new(2, "lin", |x| Ok(vec![2.0 * x[0], 3.0 * x[1]]));
        let j = fd_jacobian(&lin, &[1.0, 1.0], 1e-5).unwrap();
        assert!(j.max_abs_diff(&Matrix::diag(&[2.0, 3.0])) < 1e-9);
    }

    #[test]
    fn fd_jacobian_reports_domain_violation() {
        let m = FnMap::new(1, "sqrt", |x| Ok(vec![x[0].sqrt()])).with_domain(crate::smooth::Domain::Box {
            lo: vec![0.0],
            hi: vec![1.0],
        });
        assert!(matches!(fd_jacobian(&m, &[5e-6], 1e-5), Err(LabError::Domain(_))));
    }

    #[test]
    fn rk4_constant_and_zero_fields() {
        let c = FnField::constant(vec![0.5, -2.0]);
        assert_eq!(rk4_flow(&c, &[1.0, 1.0], 0.0, 1.0, 1).unwrap(), vec![1.5, -1.0]);
        let x = rk4_flow(&c, &[1.0, 1.0], 0.0, 1.0, 7).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-15 && (x[1] + 1.0).abs() < 1e-15);
        let z = FnField::zero(2);
        assert_eq!(rk4_flow(&z, &[0.2, 0.7], 0.0, 3.0, 10).unwrap(), vec![0.2, 0.7]);
    }

    #[test]
    fn rk4_rotation_generator_quarter_turn() {
        let rot = FnField::new(2, |_, x| vec![-x[1], x[0]]);
        let x = rk4_flow(&rot, &[1.0, 0.0], 0.0, FRAC_PI_2, 1000).unwrap();
        assert!(x[0].abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8, "{x:?}");
    }

    #[test]
    fn rk4_reports_failure_time() {
        let blow = FnField::new(1, |t, x| if t > 0.5 { vec![f64::NAN] } else { vec![x[0]] });
        match rk4_flow(&blow, &[1.0], 0.0, 1.0, 10) {
            Err(LabError::Integration { time, .. }) => assert!(time > 0.5 && time <= 0.6),
            other => panic!("expected integration error, got {other:?}"),
        }
        assert!(rk4_flow(&blow, &[1.0], 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn quadrature_examples() {
        assert!((quad_adaptive(f64::sin, 0.0, FRAC_PI_2, 1e-12).unwrap() - 1.0).abs() < 1e-10);
        let s2 = quad_adaptive(|t| t.sin().powi(2), 0.0, FRAC_PI_2, 1e-12).unwrap();
        assert!((s2 - FRAC_PI_4).abs() < 1e-10);
        assert_eq!(quad_adaptive(|_| 1.0, 0.0, 3.0, 1e-10).unwrap(), 3.0);
        assert!(quad_adaptive(|t| 1.0 / t, -1.0, 1.0, 1e-12).is_err());
        assert!(quad_adaptive(|t| t, 1.0, 0.0, 1e-10).is_err());
    }

    #[test]
    fn inverse_monotone_examples() {
        assert!((inverse_monotone(|x| x, None, 0.3, 0.0, 1.0, 1e-14).unwrap() - 0.3).abs() < 1e-14);
        let g1 = |t: f64| 1.0 - t.cos();
        let d = |t: f64| t.sin();
        let x = inverse_monotone(g1, Some(&d), 1.0, 0.0, FRAC_PI_2, 1e-12).unwrap();
        assert!((x - FRAC_PI_2).abs() < 1e-10);
        let rayleigh = |r: f64| 1.0 - (-r * r / 2.0).exp();
        let dr = |r: f64| r * (-r * r / 2.0).exp();
        let x = inverse_monotone(rayleigh, Some(&dr), 0.5, 0.0, 10.0, 1e-13).unwrap();
        assert!((x - (2.0 * 2f64.ln()).sqrt()).abs() < 1e-9);
        assert!(matches!(
            inverse_monotone(|x| x, None, 2.0, 0.0, 1.0, 1e-12),
            Err(LabError::Range { .. })
        ));
    }

    #[test]
    fn divergence_examples() {
        let rot = FnField::new(2, |_, x| vec![-x[1], x[0]]);
        assert!(fd_divergence(&rot, 0.0, &[0.4, -1.3], 1e-5).unwrap().abs() < 1e-9);
        let radial = FnField::new(3, |_, x| x.to_vec());
        assert!((fd_divergence(&radial, 0.0, &[0.4, -1.3, 2.0], 1e-5).unwrap() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn gamma_and_ball_volumes() {
        assert!((gamma(5.0) - 24.0).abs() < 1e-10);
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-13);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-13);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * PI).abs() < 1e-12);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_cubic_preserves_monotonicity() {
        let xs: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x: &f64| if *x < 1.0 { 0.0 } else { x * x }).collect();
        let mc = MonotoneCubic::new(xs, ys).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..1000 {
            let v = mc.eval(k as f64 * 0.0019);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        assert!((mc.eval(1.5) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn tolerance_profile_validation() {
        assert!(ToleranceProfile::default().validate().is_ok());
        let bad = ToleranceProfile { quad_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn halton_and_stats() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(3, 3), 1.0 / 9.0);
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
