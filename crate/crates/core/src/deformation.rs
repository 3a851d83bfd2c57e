//! First-order checks on smooth deformations of OCT maps: generator
//! extraction, the pairwise constraint system, divergence, the wave form of
//! the constraints, boundary vanishing and the resonance condition.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{Matrix, Point};
use crate::maps::{compose, oct_residual};
use crate::smooth::{field_jacobian, FieldRef, MapRef, SmoothMap, VectorField};
use crate::spurious::flow_map;

pub const DEFAULT_DT: f64 = 1e-4;
pub const WAVE_STEP: f64 = 1e-3;
const JACOBIAN_STEP: f64 = 1e-5;
const OCT_PRECHECK: f64 = 1e-6;
const NORM_FLOOR: f64 = 1e-12;
pub const RESONANCE_TOL: f64 = 1e-9;

/// t ↦ map, e.g. t ↦ Φ_t or t ↦ f_t.
pub type MapFamily = Arc<dyn Fn(f64) -> Result<MapRef> + Send + Sync>;

/// A smooth family Φ_t around a base map f₀ = Φ_0.
#[derive(Clone)]
pub struct Deformation {
    base: MapRef,
    family: MapFamily,
    window: f64,
}

struct Inverted(MapRef);

impl SmoothMap for Inverted {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Point> {
        self.0.inverse(x)
    }
    fn has_inverse(&self) -> bool {
        true
    }
    fn inverse(&self, y: &[f64]) -> Result<Point> {
        self.0.eval(y)
    }
    fn name(&self) -> String {
        format!("inverse({})", self.0.name())
    }
}

impl Deformation {
    /// User-supplied family on (−window, window).
    pub fn from_family(base: MapRef, family: MapFamily, window: f64) -> Result<Self> {
        if !(window > 0.0) {
            return Err(LabError::Argument("deformation window must be positive".into()));
        }
        Ok(Self { base, family, window })
    }

    /// Φ_t = f₀ ∘ Fl_t⁻¹ where Fl is the RK4 flow of `field`; with f_t = f₀ the
    /// extracted generator is `field` itself.
    pub fn from_generator(base: MapRef, field: FieldRef, steps: usize, window: f64) -> Result<Self> {
        if field.dim() != base.dim() {
            return Err(LabError::Argument("generator and base map differ in dimension".into()));
        }
        let b = base.clone();
        let family: MapFamily = Arc::new(move |t| {
            let flow: MapRef = Arc::new(flow_map(field.clone(), t, steps)?);
            Ok(compose(b.clone(), Arc::new(Inverted(flow)))?.into_ref())
        });
        Self::from_family(base, family, window)
    }

    pub fn base(&self) -> &MapRef {
        &self.base
    }

    pub fn at(&self, t: f64) -> Result<MapRef> {
        if t.abs() >= self.window {
            return Err(LabError::Argument(format!("t = {t} outside the window (−{w}, {w})", w = self.window)));
        }
        (self.family)(t)
    }

    /// max |Φ_0(x) − f₀(x)| over the points.
    pub fn initial_mismatch(&self, points: &[Point]) -> Result<f64> {
        let phi0 = self.at(0.0)?;
        let mut worst = 0.0f64;
        for p in points {
            let a = phi0.eval(p)?;
            let b = self.base.eval(p)?;
            worst = worst.max(crate::linalg::dist(&a, &b));
        }
        Ok(worst)
    }
}

/// Generator of Ψ_τ = Φ_τ⁻¹ ∘ f_τ at a fixed τ, by symmetric differencing in τ.
pub struct ExtractedGenerator {
    dim: usize,
    t: f64,
    dt: f64,
    phi_t: MapRef,
    f_t: MapRef,
    phi_plus: MapRef,
    f_plus: MapRef,
    phi_minus: MapRef,
    f_minus: MapRef,
}

impl ExtractedGenerator {
    fn psi(phi: &MapRef, f: &MapRef, s: &[f64]) -> Result<Point> {
        phi.inverse(&f.eval(s)?)
    }

    fn psi_inverse(&self, x: &[f64]) -> Result<Point> {
        if self.t == 0.0 {
            // Ψ_0 is the identity by construction
            return Ok(x.to_vec());
        }
        self.f_t.inverse(&self.phi_t.eval(x)?)
    }
}

impl VectorField for ExtractedGenerator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _t: f64, x: &[f64]) -> Result<Point> {
        let s = self.psi_inverse(x)?;
        let plus = Self::psi(&self.phi_plus, &self.f_plus, &s)?;
        let minus = Self::psi(&self.phi_minus, &self.f_minus, &s)?;
        Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * self.dt)).collect())
    }
}

/// X_t with ∂_τΨ_τ = X_τ(Ψ_τ), Ψ_τ = Φ_τ⁻¹ ∘ f_τ, evaluated at τ = t.
pub fn extract_generator(def: &Deformation, f_family: &MapFamily, t: f64, dt: f64) -> Result<ExtractedGenerator> {
    if !(dt > 0.0) {
        return Err(LabError::Argument("dt must be positive".into()));
    }
    let phis = [def.at(t)?, def.at(t + dt)?, def.at(t - dt)?];
    if let Some(m) = phis.iter().find(|m| !m.has_inverse()) {
        return Err(LabError::Capability(format!("{} has no inverse; cannot form Φ⁻¹ ∘ f", m.name())));
    }
    let fs = [f_family(t)?, f_family(t + dt)?, f_family(t - dt)?];
    if t != 0.0 && !fs[0].has_inverse() {
        return Err(LabError::Capability(format!("{} has no inverse", fs[0].name())));
    }
    let [phi_t, phi_plus, phi_minus] = phis;
    let [f_t, f_plus, f_minus] = fs;
    Ok(ExtractedGenerator { dim: def.base.dim(), t, dt, phi_t, f_t, phi_plus, f_plus, phi_minus, f_minus })
}

/// Maximum residual of one (i, j) equation of the first-order system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub i: usize,
    pub j: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveResidual {
    pub coordinate: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintTolerances {
    pub first_order: f64,
    pub divergence: f64,
    pub boundary: f64,
    pub wave: f64,
}

impl Default for ConstraintTolerances {
    fn default() -> Self {
        Self { first_order: 1e-6, divergence: 1e-6, boundary: 1e-12, wave: 1e-4 }
    }
}

/// Residuals of the deformation constraints over a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub pairs: Vec<PairResidual>,
    pub first_order_max: f64,
    pub divergence_max: f64,
    pub boundary_max: Option<f64>,
    pub wave: Vec<WaveResidual>,
    pub tolerances: ConstraintTolerances,
    pub first_order_pass: bool,
    pub divergence_pass: bool,
    pub boundary_pass: Option<bool>,
    pub wave_pass: Option<bool>,
    pub n_points: usize,
}

impl ConstraintReport {
    pub fn pass(&self) -> bool {
        self.first_order_pass
            && self.divergence_pass
            && self.boundary_pass.unwrap_or(true)
            && self.wave_pass.unwrap_or(true)
    }

    pub fn with_boundary(mut self, max: f64) -> Self {
        self.boundary_max = Some(max);
        self.boundary_pass = Some(max <= self.tolerances.boundary);
        self
    }

    pub fn with_wave(mut self, wave: Vec<WaveResidual>) -> Self {
        let worst = wave.iter().map(|w| w.residual).fold(0.0, f64::max);
        self.wave_pass = Some(worst <= self.tolerances.wave);
        self.wave = wave;
        self
    }
}

/// Λ = diag(Df₀ᵀDf₀) after checking that the off-diagonal part vanishes.
fn lambda_at(f0: &dyn SmoothMap, x: &[f64]) -> Result<Point> {
    let jac = f0.jacobian(x)?;
    let r = oct_residual(&jac);
    if !(r <= OCT_PRECHECK) {
        return Err(LabError::Precondition(format!(
            "base map is not OCT at {x:?} (column cosine {r:e} > {OCT_PRECHECK:e})"
        )));
    }
    let g = jac.gram();
    Ok((0..g.rows()).map(|k| g[(k, k)]).collect())
}

fn check_inputs(f0: &dyn SmoothMap, x: &dyn VectorField, points: &[Point]) -> Result<()> {
    if f0.dim() != x.dim() {
        return Err(LabError::Argument("field and base map differ in dimension".into()));
    }
    if points.is_empty() {
        return Err(LabError::Argument("constraint check needs at least one point".into()));
    }
    Ok(())
}

/// Evaluates Λ_i ∂_j X_i + Λ_j ∂_i X_j for i < j, normalized by
/// √(Λ_iΛ_j)(‖X‖_∞ + 1e-12), and max |Div X|.
pub fn oct_constraint_residual(
    f0: &dyn SmoothMap,
    x: &dyn VectorField,
    points: &[Point],
    tolerances: ConstraintTolerances,
) -> Result<ConstraintReport> {
    check_inputs(f0, x, points)?;
    let d = f0.dim();
    let mut raw = vec![vec![0.0f64; d]; d];
    let mut sup = 0.0f64;
    let mut divergence_max = 0.0f64;
    for p in points {
        let lam = lambda_at(f0, p)?;
        let v = x.eval(0.0, p)?;
        sup = v.iter().fold(sup, |m, c| m.max(c.abs()));
        let dx: Matrix = field_jacobian(x, 0.0, p, JACOBIAN_STEP)?;
        divergence_max = divergence_max.max(dx.trace().abs());
        for i in 0..d {
            for j in i + 1..d {
                let r = (lam[i] * dx[(i, j)] + lam[j] * dx[(j, i)]).abs() / (lam[i] * lam[j]).sqrt();
                raw[i][j] = raw[i][j].max(r);
            }
        }
    }
    let scale = sup + NORM_FLOOR;
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            pairs.push(PairResidual { i, j, max_residual: raw[i][j] / scale });
        }
    }
    let first_order_max = pairs.iter().map(|p| p.max_residual).fold(0.0, f64::max);
    Ok(ConstraintReport {
        pairs,
        first_order_max,
        divergence_max,
        boundary_max: None,
        wave: Vec::new(),
        first_order_pass: first_order_max <= tolerances.first_order,
        divergence_pass: divergence_max <= tolerances.divergence,
        boundary_pass: None,
        wave_pass: None,
        tolerances,
        n_points: points.len(),
    })
}

/// max |∂_i²X_i − Σ_{j≠i} ∂_j(a_j ∂_j X_i)| with a_j = Λ_i/Λ_j, using
/// second-order stencils of width 1e-3 and staggered coefficients.
pub fn wave_residual(f0: &dyn SmoothMap, x: &dyn VectorField, i: usize, points: &[Point]) -> Result<f64> {
    check_inputs(f0, x, points)?;
    let d = f0.dim();
    if i >= d {
        return Err(LabError::Argument(format!("coordinate {i} out of range for d = {d}")));
    }
    let h = WAVE_STEP;
    let xi = |p: &[f64]| -> Result<f64> { Ok(x.eval(0.0, p)?[i]) };
    let shifted = |p: &[f64], k: usize, by: f64| -> Point {
        let mut q = p.to_vec();
        q[k] += by;
        q
    };
    let mut worst = 0.0f64;
    for p in points {
        let centre = xi(p)?;
        let second_i = (xi(&shifted(p, i, h))? - 2.0 * centre + xi(&shifted(p, i, -h))?) / (h * h);
        let mut transverse = 0.0;
        for j in (0..d).filter(|&j| j != i) {
            let up = shifted(p, j, 0.5 * h);
            let down = shifted(p, j, -0.5 * h);
            let lu = lambda_at(f0, &up)?;
            let ld = lambda_at(f0, &down)?;
            let flux_up = lu[i] / lu[j] * (xi(&shifted(p, j, h))? - centre);
            let flux_down = ld[i] / ld[j] * (centre - xi(&shifted(p, j, -h))?);
            transverse += (flux_up - flux_down) / (h * h);
        }
        worst = worst.max((second_i - transverse).abs());
    }
    Ok(worst)
}

/// max |X(s)| over `samples` points of the unit cube within `epsilon` of its boundary.
pub fn boundary_vanishing<R: Rng + ?Sized>(
    x: &dyn VectorField,
    epsilon: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(LabError::Argument(format!("epsilon must lie in (0, 0.5), got {epsilon}")));
    }
    let d = x.dim();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut s: Point = (0..d).map(|_| rng.gen::<f64>()).collect();
        let face = rng.gen_range(0..d);
        let depth = rng.gen::<f64>() * epsilon;
        s[face] = if rng.gen::<bool>() { depth } else { 1.0 - depth };
        let v = x.eval(0.0, &s)?;
        worst = v.iter().fold(worst, |m, c| m.max(c.abs()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub alpha: f64,
    pub is_resonant: bool,
}

/// α = √(Σ_{j≠i} m_j² μ_i²/μ_j²); resonant iff α is within 1e-9 of an integer.
/// The entry m[i] is ignored.
pub fn resonance_alpha(mu: &[f64], m: &[i64], i: usize) -> Result<Resonance> {
    if mu.len() != m.len() {
        return Err(LabError::Argument("μ and m differ in length".into()));
    }
    if i >= mu.len() {
        return Err(LabError::Argument(format!("index {i} out of range for d = {}", mu.len())));
    }
    if mu.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(LabError::Argument("μ entries must be positive and finite".into()));
    }
    let sum: f64 = (0..mu.len())
        .filter(|&j| j != i)
        .map(|j| {
            let ratio = mu[i] / mu[j];
            (m[j] * m[j]) as f64 * ratio * ratio
        })
        .sum();
    let alpha = sum.sqrt();
    Ok(Resonance { alpha, is_resonant: (alpha - alpha.round()).abs() < RESONANCE_TOL })
}
