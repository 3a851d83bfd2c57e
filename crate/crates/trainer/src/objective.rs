//! L_Reg = E[−log p_θ(x)] + λ·C_OCT(g_θ) (+ optional anchor) with a
//! hand-written reverse pass.
//!
//! Each data point is pushed through g⁻¹ while carrying M = Dg⁻¹(x). For a
//! 2×2 M the pointwise contrast of g = (g⁻¹)⁻¹ at s = g⁻¹(x) is
//!   log‖M row 0‖ + log‖M row 1‖ − log|det M|,
//! since the columns of M⁻¹ are the rows of M rotated and divided by det M.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::model::{clamp_log_scale, conditioner, layer_size, standard_normal_nll, FlowModel, M2, P2, BETA, C_ALPHA, C_MU, HEADER, NU};

/// Per-term means of the objective over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub nll: f64,
    pub c_oct: f64,
    pub anchor: f64,
}

/// Paired latent targets for the anchored objective, with their weight.
#[derive(Debug, Clone, Copy)]
pub struct Anchor<'a> {
    pub latents: &'a [P2],
    pub weight: f64,
}

#[derive(Debug, Clone, Default)]
struct Tape {
    v: P2,
    jv: M2,
    h: Vec<f64>,
    z: f64,
    beta_clamped: bool,
    b: f64,
    e: f64,
    mu: f64,
    o: f64,
    mu_z: f64,
    alpha_z: f64,
    alpha_clamped: bool,
    k: f64,
    jc_out: P2,
}

struct Workspace {
    tapes: Vec<Tape>,
}

impl Workspace {
    fn new(model: &FlowModel) -> Self {
        let tape = Tape { h: vec![0.0; model.hidden()], ..Default::default() };
        Self { tapes: vec![tape; model.layers()] }
    }
}

/// Forward through g⁻¹ recording the tape; returns (s, M, Σ(β + α)).
fn forward_tape(model: &FlowModel, x: P2, ws: &mut Workspace) -> Result<(P2, M2, f64)> {
    let hidden = model.hidden();
    let mut y = x;
    let mut j: M2 = [[1.0, 0.0], [0.0, 1.0]];
    let mut sum = 0.0;
    for k in (0..model.layers()).rev() {
        let pm = model.perms()[k];
        let mut v = [0.0; 2];
        let mut jv = [[0.0; 2]; 2];
        for i in 0..2 {
            v[pm[i]] = y[i];
            jv[pm[i]] = j[i];
        }
        let p = model.layer_params(k);
        let (c, u) = (model.conds()[k], 1 - model.conds()[k]);
        let t = &mut ws.tapes[k];
        let (beta, beta_clamped) = clamp_log_scale(p[BETA]);
        let b = (-beta).exp();
        let z = (v[c] - p[NU]) * b;
        let co = conditioner(p, hidden, z, &mut t.h);
        let e = (-co.alpha).exp();
        let o = (v[u] - co.mu) * e;
        let kk = -e * co.mu_z - o * co.alpha_z;
        let jc_out = [b * jv[c][0], b * jv[c][1]];
        let ju_out = [kk * jc_out[0] + e * jv[u][0], kk * jc_out[1] + e * jv[u][1]];
        t.v = v;
        t.jv = jv;
        t.z = z;
        t.beta_clamped = beta_clamped;
        t.b = b;
        t.e = e;
        t.mu = co.mu;
        t.o = o;
        t.mu_z = co.mu_z;
        t.alpha_z = co.alpha_z;
        t.alpha_clamped = co.clamped;
        t.k = kk;
        t.jc_out = jc_out;
        y[c] = z;
        y[u] = o;
        j[c] = jc_out;
        j[u] = ju_out;
        sum += beta + co.alpha;
        if !(z.is_finite() && o.is_finite() && ju_out.iter().all(|v| v.is_finite())) {
            return Err(TrainError::Numeric { layer: Some(k), detail: format!("inverse pass at x = {x:?}") });
        }
    }
    Ok((y, j, sum))
}

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Reverse pass for one sample given adjoints of s, M and of every β, α.
fn backward(model: &FlowModel, ws: &Workspace, mut ys: P2, mut js: M2, scale_bar: f64, grad: &mut [f64]) {
    let hidden = model.hidden();
    let n = layer_size(hidden);
    for k in 0..model.layers() {
        let t = &ws.tapes[k];
        let p = model.layer_params(k);
        let g = &mut grad[k * n..(k + 1) * n];
        let (c, u) = (model.conds()[k], 1 - model.conds()[k]);
        let (z_bar, o_bar) = (ys[c], ys[u]);
        let (jc_bar, ju_bar) = (js[c], js[u]);
        let (e, b, o) = (t.e, t.b, t.o);

        let k_bar = dot(ju_bar, t.jc_out);
        let jc_out_bar = [jc_bar[0] + t.k * ju_bar[0], jc_bar[1] + t.k * ju_bar[1]];
        let ju_in_bar = [e * ju_bar[0], e * ju_bar[1]];
        let o_tot = o_bar - k_bar * t.alpha_z;
        let yu_in_bar = o_tot * e;
        let mu_bar = -o_tot * e;
        let e_bar = dot(ju_bar, t.jv[u]) + o_tot * (t.v[u] - t.mu) - k_bar * t.mu_z;
        let mu_z_bar = -e * k_bar;
        let (alpha_bar, alpha_z_bar) =
            if t.alpha_clamped { (0.0, 0.0) } else { (-e * e_bar + scale_bar, -o * k_bar) };

        // conditioner
        let (w1, rest) = p[HEADER..].split_at(hidden);
        let (_, rest) = rest.split_at(hidden);
        let (w_mu, w_alpha) = rest.split_at(hidden);
        g[C_MU] += mu_bar;
        g[C_ALPHA] += alpha_bar;
        let mut z_cond = 0.0;
        for i in 0..hidden {
            let hi = t.h[i];
            let gi = 1.0 - hi * hi;
            let vi = gi * w1[i];
            g[HEADER + 2 * hidden + i] += mu_bar * hi + mu_z_bar * vi;
            g[HEADER + 3 * hidden + i] += alpha_bar * hi + alpha_z_bar * vi;
            let v_bar = mu_z_bar * w_mu[i] + alpha_z_bar * w_alpha[i];
            let mut h_bar = mu_bar * w_mu[i] + alpha_bar * w_alpha[i];
            h_bar -= 2.0 * hi * v_bar * w1[i];
            let a_bar = h_bar * gi;
            g[HEADER + i] += v_bar * gi + a_bar * t.z;
            g[HEADER + hidden + i] += a_bar;
            z_cond += a_bar * w1[i];
        }
        let z_tot = z_bar + z_cond;
        let jc_in_bar = [b * jc_out_bar[0], b * jc_out_bar[1]];
        let b_bar = dot(jc_out_bar, t.jv[c]) + z_tot * (t.v[c] - p[NU]);
        g[NU] += -z_tot * b;
        if !t.beta_clamped {
            g[BETA] += -b * b_bar + scale_bar;
        }

        let mut v_bar = [0.0; 2];
        let mut jv_bar = [[0.0; 2]; 2];
        v_bar[c] = z_tot * b;
        v_bar[u] = yu_in_bar;
        jv_bar[c] = jc_in_bar;
        jv_bar[u] = ju_in_bar;
        let pm = model.perms()[k];
        for i in 0..2 {
            ys[i] = v_bar[pm[i]];
            js[i] = jv_bar[pm[i]];
        }
    }
}

fn row_norm2(r: P2) -> f64 {
    r[0] * r[0] + r[1] * r[1]
}

fn check_batch(xs: &[P2], anchor: Option<Anchor<'_>>) -> Result<()> {
    if xs.is_empty() {
        return Err(TrainError::Config("loss needs a nonempty batch".into()));
    }
    if let Some(a) = anchor {
        if a.latents.len() != xs.len() {
            return Err(TrainError::Config("anchor latents must pair with the batch".into()));
        }
    }
    Ok(())
}

fn sample_terms(s: P2, m: M2, sum: f64) -> (f64, f64) {
    let nll = standard_normal_nll(s) + sum;
    let c = 0.5 * (row_norm2(m[0]).ln() + row_norm2(m[1]).ln()) + sum;
    (nll, c)
}

fn finish(parts: &mut LossParts, n: usize, lambda: f64, anchor: Option<Anchor<'_>>) -> Result<()> {
    let nf = n as f64;
    parts.nll /= nf;
    parts.c_oct /= nf;
    parts.anchor /= nf;
    parts.total = parts.nll + lambda * parts.c_oct + anchor.map_or(0.0, |a| a.weight * parts.anchor);
    if !parts.total.is_finite() {
        return Err(TrainError::Numeric { layer: None, detail: format!("non-finite loss {parts:?}") });
    }
    Ok(())
}

/// Objective value only.
pub fn loss(model: &FlowModel, xs: &[P2], lambda: f64, anchor: Option<Anchor<'_>>) -> Result<LossParts> {
    check_batch(xs, anchor)?;
    let mut ws = Workspace::new(model);
    let mut parts = LossParts::default();
    for (idx, &x) in xs.iter().enumerate() {
        let (s, m, sum) = forward_tape(model, x, &mut ws)?;
        let (nll, c) = sample_terms(s, m, sum);
        parts.nll += nll;
        parts.c_oct += c;
        if let Some(a) = anchor {
            let t = a.latents[idx];
            parts.anchor += (s[0] - t[0]).powi(2) + (s[1] - t[1]).powi(2);
        }
    }
    finish(&mut parts, xs.len(), lambda, anchor)?;
    Ok(parts)
}

/// Objective and its exact gradient with respect to `model.params()`.
pub fn loss_and_grad(
    model: &FlowModel,
    xs: &[P2],
    lambda: f64,
    anchor: Option<Anchor<'_>>,
) -> Result<(LossParts, Vec<f64>)> {
    check_batch(xs, anchor)?;
    let mut ws = Workspace::new(model);
    let mut grad = vec![0.0; model.params().len()];
    let mut parts = LossParts::default();
    let inv_n = 1.0 / xs.len() as f64;
    // every β and α enters the per-sample objective with weight 1 + λ
    let scale_bar = (1.0 + lambda) * inv_n;
    for (idx, &x) in xs.iter().enumerate() {
        let (s, m, sum) = forward_tape(model, x, &mut ws)?;
        let (nll, c) = sample_terms(s, m, sum);
        parts.nll += nll;
        parts.c_oct += c;
        let mut s_bar = [s[0] * inv_n, s[1] * inv_n];
        if let Some(a) = anchor {
            let t = a.latents[idx];
            let d = [s[0] - t[0], s[1] - t[1]];
            parts.anchor += d[0] * d[0] + d[1] * d[1];
            s_bar[0] += 2.0 * a.weight * d[0] * inv_n;
            s_bar[1] += 2.0 * a.weight * d[1] * inv_n;
        }
        let mut m_bar = [[0.0; 2]; 2];
        if lambda != 0.0 {
            for r in 0..2 {
                let w = lambda * inv_n / row_norm2(m[r]);
                m_bar[r] = [w * m[r][0], w * m[r][1]];
            }
        }
        backward(model, &ws, s_bar, m_bar, scale_bar, &mut grad);
    }
    finish(&mut parts, xs.len(), lambda, anchor)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::Numeric { layer: None, detail: "non-finite gradient".into() });
    }
    Ok((parts, grad))
}
