//! Planar flow g: latent s ↦ observation x built from masked affine
//! autoregressive layers, each followed by a fixed permutation.
//!
//! Layer k (generative direction), with c the conditioning coordinate and u
//! the other one:
//!   x_c = s_c·e^β + ν
//!   x_u = s_u·e^{α(s_c)} + μ(s_c)
//! where (μ, α) come from a one-hidden-layer tanh perceptron of s_c. The
//! constant affine map on x_c is the degree-one output of a MADE conditioner.

use rand::Rng;
use serde::{Deserialize, Serialize};

use ica_lab::contrast::c_oct_pointwise;
use ica_lab::Matrix;

use crate::error::{Result, TrainError};

pub type P2 = [f64; 2];
pub type M2 = [[f64; 2]; 2];

pub const LOG_SCALE_CLAMP: f64 = 7.0;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) const BETA: usize = 0;
pub(crate) const NU: usize = 1;
pub(crate) const C_MU: usize = 2;
pub(crate) const C_ALPHA: usize = 3;
pub(crate) const HEADER: usize = 4;

pub fn layer_size(hidden: usize) -> usize {
    HEADER + 4 * hidden
}

/// Conditioner output at one input value; `h` holds the hidden activations.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CondOut {
    pub mu: f64,
    pub alpha: f64,
    pub mu_z: f64,
    pub alpha_z: f64,
    pub clamped: bool,
}

pub(crate) fn clamp_log_scale(raw: f64) -> (f64, bool) {
    if raw > LOG_SCALE_CLAMP {
        (LOG_SCALE_CLAMP, true)
    } else if raw < -LOG_SCALE_CLAMP {
        (-LOG_SCALE_CLAMP, true)
    } else {
        (raw, false)
    }
}

/// Evaluates (μ, α) and their z-derivatives; writes tanh activations to `h`.
pub(crate) fn conditioner(p: &[f64], hidden: usize, z: f64, h: &mut [f64]) -> CondOut {
    let (w1, rest) = p[HEADER..].split_at(hidden);
    let (b1, rest) = rest.split_at(hidden);
    let (w_mu, w_alpha) = rest.split_at(hidden);
    let mut out = CondOut { mu: p[C_MU], ..Default::default() };
    let mut alpha_raw = p[C_ALPHA];
    for i in 0..hidden {
        let hi = (w1[i] * z + b1[i]).tanh();
        h[i] = hi;
        let v = (1.0 - hi * hi) * w1[i];
        out.mu += w_mu[i] * hi;
        alpha_raw += w_alpha[i] * hi;
        out.mu_z += w_mu[i] * v;
        out.alpha_z += w_alpha[i] * v;
    }
    let (alpha, clamped) = clamp_log_scale(alpha_raw);
    out.alpha = alpha;
    out.clamped = clamped;
    if clamped {
        out.alpha_z = 0.0;
    }
    out
}

/// Flow model with parameters stored contiguously, layer by layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    hidden: usize,
    conds: Vec<usize>,
    perms: Vec<[usize; 2]>,
    theta: Vec<f64>,
}

impl FlowModel {
    /// All parameters zero and identity permutations: the identity map.
    pub fn zeros(layers: usize, hidden: usize) -> Self {
        Self {
            hidden,
            conds: vec![0; layers],
            perms: vec![[0, 1]; layers],
            theta: vec![0.0; layers * layer_size(hidden)],
        }
    }

    /// Random permutations from `perm_rng`; hidden weights uniform in (−1, 1),
    /// output weights in (−1e-3, 1e-3) so the initial flow is close to the identity.
    pub fn new<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        layers: usize,
        hidden: usize,
        init_rng: &mut R1,
        perm_rng: &mut R2,
    ) -> Result<Self> {
        if layers == 0 || hidden == 0 {
            return Err(TrainError::Config("flow needs at least one layer and one hidden unit".into()));
        }
        let mut model = Self::zeros(layers, hidden);
        for k in 0..layers {
            model.perms[k] = if perm_rng.gen::<bool>() { [1, 0] } else { [0, 1] };
            let p = model.layer_params_mut(k);
            for i in 0..hidden {
                p[HEADER + i] = init_rng.gen_range(-1.0..1.0);
                p[HEADER + hidden + i] = init_rng.gen_range(-1.0..1.0);
                p[HEADER + 2 * hidden + i] = init_rng.gen_range(-1e-3..1e-3);
                p[HEADER + 3 * hidden + i] = init_rng.gen_range(-1e-3..1e-3);
            }
        }
        Ok(model)
    }

    /// Rebuilds a model from stored parts, validating their shapes.
    pub fn from_parts(hidden: usize, conds: Vec<usize>, perms: Vec<[usize; 2]>, theta: Vec<f64>) -> Result<Self> {
        let layers = conds.len();
        if layers == 0 || hidden == 0 || perms.len() != layers || theta.len() != layers * layer_size(hidden) {
            return Err(TrainError::Config("stored flow has inconsistent shapes".into()));
        }
        if conds.iter().any(|&c| c > 1) || perms.iter().any(|p| *p != [0, 1] && *p != [1, 0]) {
            return Err(TrainError::Config("stored flow has invalid permutations".into()));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::Numeric { layer: None, detail: "stored parameters are not finite".into() });
        }
        Ok(Self { hidden, conds, perms, theta })
    }

    /// The same layer layout with every parameter zero: the bare composed
    /// permutation, which fixes how latent coordinates are labelled.
    pub fn permutation_only(&self) -> Self {
        Self { theta: vec![0.0; self.theta.len()], ..self.clone() }
    }

    pub fn layers(&self) -> usize {
        self.conds.len()
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn perms(&self) -> &[[usize; 2]] {
        &self.perms
    }

    pub fn conds(&self) -> &[usize] {
        &self.conds
    }

    pub fn set_perm(&mut self, k: usize, perm: [usize; 2]) {
        assert!(perm == [0, 1] || perm == [1, 0], "not a permutation of two coordinates");
        self.perms[k] = perm;
    }

    pub fn set_cond(&mut self, k: usize, cond: usize) {
        assert!(cond < 2, "conditioning coordinate must be 0 or 1");
        self.conds[k] = cond;
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn layer_params(&self, k: usize) -> &[f64] {
        let n = layer_size(self.hidden);
        &self.theta[k * n..(k + 1) * n]
    }

    pub fn layer_params_mut(&mut self, k: usize) -> &mut [f64] {
        let n = layer_size(self.hidden);
        &mut self.theta[k * n..(k + 1) * n]
    }

    /// Sets one layer's constant shift and log-scale of the transformed coordinate.
    pub fn set_layer_affine(&mut self, k: usize, shift: f64, log_scale: f64) {
        let p = self.layer_params_mut(k);
        p[C_MU] = shift;
        p[C_ALPHA] = log_scale;
    }

    fn check(layer: usize, v: &[f64]) -> Result<()> {
        if v.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(TrainError::Numeric { layer: Some(layer), detail: format!("state {v:?}") })
        }
    }

    /// g(s) and log|det Dg(s)|.
    pub fn forward(&self, s: P2) -> Result<(P2, f64)> {
        let (x, _, ld) = self.forward_impl(s, false)?;
        Ok((x, ld))
    }

    /// g(s) and Dg(s).
    pub fn forward_with_jacobian(&self, s: P2) -> Result<(P2, M2)> {
        let (x, j, _) = self.forward_impl(s, true)?;
        Ok((x, j))
    }

    fn forward_impl(&self, s: P2, with_jac: bool) -> Result<(P2, M2, f64)> {
        let mut y = s;
        let mut j: M2 = [[1.0, 0.0], [0.0, 1.0]];
        let mut ld = 0.0;
        let mut h = vec![0.0; self.hidden];
        for k in 0..self.layers() {
            let p = self.layer_params(k);
            let (c, u) = (self.conds[k], 1 - self.conds[k]);
            let (beta, _) = clamp_log_scale(p[BETA]);
            let co = conditioner(p, self.hidden, y[c], &mut h);
            let (eb, ea) = (beta.exp(), co.alpha.exp());
            if with_jac {
                let kk = y[u] * ea * co.alpha_z + co.mu_z;
                let jc = j[c];
                let ju = j[u];
                j[c] = [eb * jc[0], eb * jc[1]];
                j[u] = [kk * jc[0] + ea * ju[0], kk * jc[1] + ea * ju[1]];
            }
            y[u] = y[u] * ea + co.mu;
            y[c] = y[c] * eb + p[NU];
            ld += beta + co.alpha;
            let pm = self.perms[k];
            y = [y[pm[0]], y[pm[1]]];
            if with_jac {
                j = [j[pm[0]], j[pm[1]]];
            }
            Self::check(k, &y)?;
        }
        Ok((y, j, ld))
    }

    /// g⁻¹(x) and log|det Dg⁻¹(x)|.
    pub fn inverse(&self, x: P2) -> Result<(P2, f64)> {
        let mut y = x;
        let mut ld = 0.0;
        let mut h = vec![0.0; self.hidden];
        for k in (0..self.layers()).rev() {
            let pm = self.perms[k];
            let mut v = [0.0; 2];
            v[pm[0]] = y[0];
            v[pm[1]] = y[1];
            let p = self.layer_params(k);
            let (c, u) = (self.conds[k], 1 - self.conds[k]);
            let (beta, _) = clamp_log_scale(p[BETA]);
            let z = (v[c] - p[NU]) * (-beta).exp();
            let co = conditioner(p, self.hidden, z, &mut h);
            v[u] = (v[u] - co.mu) * (-co.alpha).exp();
            v[c] = z;
            ld -= beta + co.alpha;
            y = v;
            Self::check(k, &y)?;
        }
        Ok((y, ld))
    }

    /// log p_θ(x) = log N(g⁻¹(x); 0, I) + log|det Dg⁻¹(x)|.
    pub fn log_density(&self, x: P2) -> Result<f64> {
        let (s, ld) = self.inverse(x)?;
        Ok(-0.5 * (s[0] * s[0] + s[1] * s[1]) - LN_2PI + ld)
    }

    /// Pointwise C_OCT of g at a latent point.
    pub fn c_oct_at(&self, s: P2) -> Result<f64> {
        let (_, j) = self.forward_with_jacobian(s)?;
        let m = Matrix::from_fn(2, 2, |r, c| j[r][c]);
        Ok(c_oct_pointwise(&m)?)
    }
}

pub(crate) fn standard_normal_nll(s: P2) -> f64 {
    0.5 * (s[0] * s[0] + s[1] * s[1]) + LN_2PI
}
