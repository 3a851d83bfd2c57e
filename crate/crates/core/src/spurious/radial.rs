//! Rotation-invariant targets and the polar construction that pushes the
//! uniform cube onto them through an orthogonal-coordinate map.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::{norm, Matrix, Point};
use crate::maps::{compose, Affine1D, CoordwiseReparam, LinearMap, Monotone1D, PolarMap};
use crate::numerics::{inverse_monotone_from, quad_adaptive, unit_ball_volume, MonotoneCubic};
use crate::smooth::MapRef;
use crate::spurious::DensityField;

pub const TABLE_SIZE: usize = 2048;
/// Tail mass discarded when truncating an unbounded radial support.
pub const TAIL_MASS: f64 = 1e-10;
const QUAD_TOL: f64 = 1e-13;
const ROOT_TOL: f64 = 1e-14;

type Integrand = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cumulative integral F(x) = ∫_lo^x w of a positive integrand, tabulated on a
/// uniform grid. Evaluation and inversion are exact up to quadrature/root
/// tolerances: the table brackets, a monotone cubic supplies the starting
/// guess and in-panel quadrature does the rest.
pub struct TabulatedCdf {
    integrand: Integrand,
    grid: Vec<f64>,
    cumulative: Vec<f64>,
    inverse_guess: MonotoneCubic,
}

impl TabulatedCdf {
    pub fn new(integrand: Integrand, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || !hi.is_finite() || n < 2 {
            return Err(LabError::Argument(format!("cannot tabulate on [{lo}, {hi}] with {n} knots")));
        }
        let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        let mut cumulative = Vec::with_capacity(n);
        cumulative.push(0.0);
        for w in grid.windows(2) {
            let panel = quad_adaptive(|x| integrand(x), w[0], w[1], QUAD_TOL / n as f64)?;
            cumulative.push(cumulative.last().unwrap() + panel);
        }
        let total = *cumulative.last().unwrap();
        if !(total > 0.0) || !total.is_finite() {
            return Err(LabError::Argument(format!("integrand has non-positive or infinite mass {total}")));
        }
        // strictly increasing knots for the inverse interpolant
        let (mut ys, mut xs) = (vec![cumulative[0]], vec![grid[0]]);
        for (c, g) in cumulative.iter().zip(&grid).skip(1) {
            if *c > *ys.last().unwrap() {
                ys.push(*c);
                xs.push(*g);
            }
        }
        let inverse_guess = MonotoneCubic::new(ys, xs)?;
        Ok(Self { integrand, grid, cumulative, inverse_guess })
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub fn hi(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn integrand(&self, x: f64) -> f64 {
        (self.integrand)(x)
    }

    fn panel(&self, x: f64) -> usize {
        let k = self.grid.partition_point(|&g| g <= x);
        k.clamp(1, self.grid.len() - 1) - 1
    }

    /// F(x), clamped to [0, total] outside the tabulated interval.
    pub fn cumulative(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return 0.0;
        }
        if x >= self.hi() {
            return self.total();
        }
        let k = self.panel(x);
        self.cumulative[k] + quad_adaptive(|t| self.integrand(t), self.grid[k], x, QUAD_TOL).unwrap_or(f64::NAN)
    }

    /// F⁻¹(y) for y ∈ [0, total].
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0 && y <= self.total()) {
            return Err(LabError::Range { value: y, lo: 0.0, hi: self.total() });
        }
        let k = self.cumulative.partition_point(|&c| c <= y).clamp(1, self.grid.len() - 1) - 1;
        let (a, b) = (self.grid[k], self.grid[k + 1]);
        let base = self.cumulative[k];
        let f = |x: f64| base + quad_adaptive(|t| self.integrand(t), a, x, QUAD_TOL).unwrap_or(f64::NAN);
        let df = |x: f64| self.integrand(x);
        let tol = ROOT_TOL * self.total().max(1e-300);
        inverse_monotone_from(f, Some(&df), y, a, b, self.inverse_guess.eval(y), tol)
    }
}

impl fmt::Debug for TabulatedCdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TabulatedCdf([{}, {}], total = {})", self.lo(), self.hi(), self.total())
    }
}

/// Unnormalized radial profile p(r).
#[derive(Clone)]
pub enum RadialProfile {
    /// exp(−r²/2σ²) on (0, ∞).
    Gaussian { sigma: f64 },
    /// Constant on (inner, outer): the uniform law on a spherical shell.
    Annulus { inner: f64, outer: f64 },
    /// User profile, positive on (inner, outer); `outer` may be infinite.
    Custom { profile: Integrand, inner: f64, outer: f64 },
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialProfile::Gaussian { sigma } => write!(f, "Gaussian(σ = {sigma})"),
            RadialProfile::Annulus { inner, outer } => write!(f, "Annulus({inner}, {outer})"),
            RadialProfile::Custom { inner, outer, .. } => write!(f, "Custom({inner}, {outer})"),
        }
    }
}

impl RadialProfile {
    fn support(&self) -> (f64, f64) {
        match self {
            RadialProfile::Gaussian { .. } => (0.0, f64::INFINITY),
            RadialProfile::Annulus { inner, outer } | RadialProfile::Custom { inner, outer, .. } => (*inner, *outer),
        }
    }

    fn eval(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Gaussian { sigma } => (-r * r / (2.0 * sigma * sigma)).exp(),
            RadialProfile::Annulus { inner, outer } => {
                // closed interval so quadrature sees no jump at the endpoints
                if r >= *inner && r <= *outer {
                    1.0
                } else {
                    0.0
                }
            }
            RadialProfile::Custom { profile, .. } => profile(r),
        }
    }

    fn derivative(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Gaussian { sigma } => -r / (sigma * sigma) * self.eval(r),
            RadialProfile::Annulus { .. } => 0.0,
            RadialProfile::Custom { profile, .. } => {
                let h = 1e-6 * r.abs().max(1e-3);
                (profile(r + h) - profile(r - h)) / (2.0 * h)
            }
        }
    }
}

/// A rotation-invariant probability density p(|x|) on R^d, normalized on its
/// (possibly truncated) radial support (a, b).
#[derive(Debug)]
pub struct RadialDensity {
    d: usize,
    profile: RadialProfile,
    inner: f64,
    outer: f64,
    norm_const: f64,
    cdf: Arc<TabulatedCdf>,
}

impl RadialDensity {
    pub fn new(profile: RadialProfile, d: usize) -> Result<Self> {
        if !(2..=16).contains(&d) {
            return Err(LabError::Argument(format!("radial densities need 2 ≤ d ≤ 16, got {d}")));
        }
        if let RadialProfile::Gaussian { sigma } = profile {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(LabError::Argument(format!("Gaussian scale must be positive, got {sigma}")));
            }
        }
        let (inner, outer) = profile.support();
        if !(inner >= 0.0 && outer > inner) {
            return Err(LabError::Argument(format!("invalid radial support ({inner}, {outer})")));
        }
        let omega = unit_ball_volume(d);
        let shell = {
            let profile = profile.clone();
            move |r: f64| d as f64 * omega * r.powi(d as i32 - 1) * profile.eval(r)
        };
        let q: Integrand = Arc::new(shell);
        let outer = if outer.is_finite() { outer } else { truncation_radius(&q, inner)? };
        let cdf = TabulatedCdf::new(q, inner, outer, TABLE_SIZE)
            .map_err(|e| LabError::Argument(format!("radial profile is not normalizable: {e}")))?;
        let norm_const = cdf.total();
        Ok(Self { d, profile, inner, outer, norm_const, cdf: Arc::new(cdf) })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Radial support (a, b) after truncation.
    pub fn support(&self) -> (f64, f64) {
        (self.inner, self.outer)
    }

    /// Normalized profile p(r).
    pub fn radial_density(&self, r: f64) -> f64 {
        if r > self.inner && r < self.outer {
            self.profile.eval(r) / self.norm_const
        } else {
            0.0
        }
    }

    /// Density q(r) = d ω_d r^{d−1} p(r) of |X|.
    pub fn radius_density(&self, r: f64) -> f64 {
        self.cdf.integrand(r) / self.norm_const
    }

    /// F_q(r).
    pub fn radius_cdf(&self, r: f64) -> f64 {
        self.cdf.cumulative(r) / self.norm_const
    }

    /// ψ = F_q⁻¹.
    pub fn radius_quantile(&self, u: f64) -> Result<f64> {
        self.cdf.inverse(u * self.norm_const)
    }

}

impl DensityField for RadialDensity {
    fn dim(&self) -> usize {
        self.d
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.radial_density(norm(x))
    }

    fn gradient(&self, x: &[f64]) -> Point {
        let r = norm(x);
        if !(r > self.inner && r < self.outer) || r == 0.0 {
            return vec![0.0; x.len()];
        }
        let dp = self.profile.derivative(r) / self.norm_const;
        x.iter().map(|v| dp * v / r).collect()
    }
}

/// Radius beyond which the q-mass is below TAIL_MASS.
fn truncation_radius(q: &Integrand, inner: f64) -> Result<f64> {
    let mut hi = inner + 1.0;
    let mut mass = quad_adaptive(|r| q(r), inner, hi, QUAD_TOL)?;
    loop {
        let next = quad_adaptive(|r| q(r), hi, 2.0 * hi, QUAD_TOL)?;
        mass += next;
        hi *= 2.0;
        if next <= 1e-3 * TAIL_MASS * mass {
            break;
        }
        if hi > 1e8 {
            return Err(LabError::Argument("radial profile is not normalizable (heavy tail)".into()));
        }
    }
    let coarse = TabulatedCdf::new(q.clone(), inner, hi, TABLE_SIZE)?;
    coarse.inverse((1.0 - TAIL_MASS) * coarse.total())
}

/// u ↦ F⁻¹(u · total): the inverse of a tabulated cumulative integral rescaled to (0, 1).
pub struct ScaledQuantile {
    cdf: Arc<TabulatedCdf>,
}

impl Monotone1D for ScaledQuantile {
    fn value(&self, u: f64) -> f64 {
        self.cdf.inverse(u * self.cdf.total()).unwrap_or(f64::NAN)
    }

    fn derivative(&self, u: f64) -> f64 {
        self.cdf.total() / self.cdf.integrand(self.value(u))
    }

    fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > self.cdf.lo() && y < self.cdf.hi()) {
            return Err(LabError::Domain(format!("{y} outside ({}, {})", self.cdf.lo(), self.cdf.hi())));
        }
        Ok(self.cdf.cumulative(y) / self.cdf.total())
    }

    fn interval(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// A monotone function restricted to an open interval.
struct Restricted<F> {
    inner: F,
    lo: f64,
    hi: f64,
}

impl<F: Monotone1D> Monotone1D for Restricted<F> {
    fn value(&self, x: f64) -> f64 {
        self.inner.value(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        self.inner.derivative(x)
    }
    fn inverse(&self, y: f64) -> Result<f64> {
        self.inner.inverse(y)
    }
    fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// g_k(θ) = ∫₀^θ sin^k t dt on (0, π), tabulated.
pub fn angular_cdf(k: u32) -> Result<TabulatedCdf> {
    TabulatedCdf::new(Arc::new(move |t: f64| t.sin().powi(k as i32)), 0.0, PI, TABLE_SIZE)
}

/// The coordinate-wise part h∘λ of the construction: cube coordinates to
/// (ψ(u₁), 2πu₂, h₁(|I₁|u₃), …).
pub fn prop1_reparam(radial: &RadialDensity) -> Result<CoordwiseReparam> {
    let d = radial.dim();
    let radius = radial.cdf.clone();
    let mut funcs: Vec<Arc<dyn Monotone1D>> = vec![
        Arc::new(ScaledQuantile { cdf: radius }),
        Arc::new(Restricted { inner: Affine1D { scale: TAU, shift: 0.0 }, lo: 0.0, hi: 1.0 }),
    ];
    for k in 1..=d as u32 - 2 {
        funcs.push(Arc::new(ScaledQuantile { cdf: Arc::new(angular_cdf(k)?) }));
    }
    CoordwiseReparam::new(funcs)
}

/// Φ ∘ h ∘ λ: an orthogonal-coordinate map from the open unit cube whose
/// pushforward of the uniform law is the radial density.
pub fn prop1_build(radial: &RadialDensity) -> Result<MapRef> {
    let (a, b) = radial.support();
    let polar: MapRef = Arc::new(PolarMap::with_margin(radial.dim(), a, b, 0.0)?);
    let reparam: MapRef = Arc::new(prop1_reparam(radial)?);
    Ok(compose(polar, reparam)?.into_ref())
}

/// R ∘ prop1_build(radial) for orthogonal R.
pub fn prop1_rotated_family(radial: &RadialDensity, rotation: &Matrix) -> Result<MapRef> {
    if rotation.rows() != radial.dim() || !rotation.is_orthogonal(1e-10) {
        return Err(LabError::Argument("rotation must be a d×d orthogonal matrix".into()));
    }
    let outer: MapRef = Arc::new(LinearMap::new(rotation.clone())?);
    Ok(compose(outer, prop1_build(radial)?)?.into_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{classify_oct, interior_points};

    #[test]
    fn rayleigh_quantile_at_one_half() {
        let radial = RadialDensity::new(RadialProfile::Gaussian { sigma: 1.0 }, 2).unwrap();
        let psi = radial.radius_quantile(0.5).unwrap();
        assert!((psi - (2.0 * 2f64.ln()).sqrt()).abs() < 1e-9, "{psi}");
        // truncation keeps 1 − 1e-10 of the untruncated mass
        let (_, rmax) = radial.support();
        assert!(((-rmax * rmax / 2.0f64).exp() - TAIL_MASS).abs() < 1e-12);
    }

    #[test]
    fn angular_interval_lengths() {
        let g1 = angular_cdf(1).unwrap();
        assert!((g1.total() - 2.0).abs() < 1e-12);
        assert!((g1.cumulative(PI / 2.0) - 1.0).abs() < 1e-12);
        let g2 = angular_cdf(2).unwrap();
        assert!((g2.total() - PI / 2.0).abs() < 1e-12);
        assert!((g1.inverse(1.0).unwrap() - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn radial_normalization() {
        for d in [2, 3, 5] {
            let radial = RadialDensity::new(RadialProfile::Annulus { inner: 1.0, outer: 2.0 }, d).unwrap();
            // uniform on the shell: p = 1 / (ω_d (2^d − 1))
            let expected = 1.0 / (unit_ball_volume(d) * (2f64.powi(d as i32) - 1.0));
            assert!((radial.radial_density(1.5) - expected).abs() < 1e-10 * expected);
            assert!((radial.radius_cdf(2.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_normalizable_profiles_are_rejected() {
        let zero = RadialProfile::Custom { profile: Arc::new(|_| 0.0), inner: 0.0, outer: 1.0 };
        assert!(matches!(RadialDensity::new(zero, 2), Err(LabError::Argument(_))));
        let heavy = RadialProfile::Custom { profile: Arc::new(|r| 1.0 / (1.0 + r)), inner: 0.0, outer: f64::INFINITY };
        assert!(RadialDensity::new(heavy, 2).is_err());
    }

    #[test]
    fn prop1_map_is_oct_and_invertible() {
        let radial = RadialDensity::new(RadialProfile::Gaussian { sigma: 1.0 }, 3).unwrap();
        let f = prop1_build(&radial).unwrap();
        let pts = interior_points(&[0.0; 3], &[1.0; 3], 100, 0.01);
        assert!(classify_oct(f.as_ref(), &pts, 1e-5).unwrap().pass);
        for p in pts.iter().take(20) {
            let back = f.inverse(&f.eval(p).unwrap()).unwrap();
            assert!(crate::linalg::dist(&back, p) < 1e-8);
        }
    }
}
