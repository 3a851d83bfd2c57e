//! The two drifting mixing families and their observational laws.
//!
//! pol: f_t = f_polar ∘ h_t with f_polar(r, φ) = (r sin φ, r cos φ) and
//!      h_t(s) = (s₁ + (t/2) sin(s₁ + t) + 3, (s₂ + t)/2);
//!      latents are standard normal conditioned on |s| < 4.
//! rot: f_t(s) = e^{tW}(2s₁, s₂), W = [[0, 1], [−1, 0]].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use ica_lab::contrast::SampleTarget;
use ica_lab::numerics::inverse_monotone;
use ica_lab::{LabError, Point};

use crate::model::P2;

pub const POL_LATENT_RADIUS: f64 = 4.0;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftScenario {
    Pol,
    Rot,
}

impl fmt::Display for DriftScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pol => "pol",
            Self::Rot => "rot",
        })
    }
}

impl FromStr for DriftScenario {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self, LabError> {
        match s {
            "pol" => Ok(Self::Pol),
            "rot" => Ok(Self::Rot),
            other => Err(LabError::Argument(format!("unknown drift scenario {other:?}"))),
        }
    }
}

fn radius(t: f64, s1: f64) -> f64 {
    s1 + 0.5 * t * (s1 + t).sin() + 3.0
}

fn radius_prime(t: f64, s1: f64) -> f64 {
    1.0 + 0.5 * t * (s1 + t).cos()
}

fn std_normal_logpdf(s: P2) -> f64 {
    -0.5 * (s[0] * s[0] + s[1] * s[1]) - LN_2PI
}

/// Wraps an angle into [−π, π).
fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

impl DriftScenario {
    /// f_t(s).
    pub fn map(self, t: f64, s: P2) -> P2 {
        match self {
            Self::Pol => {
                let r = radius(t, s[0]);
                let phi = 0.5 * (s[1] + t);
                [r * phi.sin(), r * phi.cos()]
            }
            Self::Rot => {
                let (sn, cs) = t.sin_cos();
                let a = 2.0 * s[0];
                [cs * a + sn * s[1], -sn * a + cs * s[1]]
            }
        }
    }

    /// Draws one latent from the scenario's base law.
    pub fn sample_latent(self, rng: &mut dyn RngCore) -> P2 {
        loop {
            let s = [StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)];
            match self {
                Self::Rot => return s,
                Self::Pol if s[0] * s[0] + s[1] * s[1] < POL_LATENT_RADIUS * POL_LATENT_RADIUS => return s,
                Self::Pol => {}
            }
        }
    }

    /// log of the latent density.
    pub fn latent_log_density(self, s: P2) -> f64 {
        match self {
            Self::Rot => std_normal_logpdf(s),
            Self::Pol => {
                let r2 = POL_LATENT_RADIUS * POL_LATENT_RADIUS;
                if s[0] * s[0] + s[1] * s[1] >= r2 {
                    f64::NEG_INFINITY
                } else {
                    // P(|s|² < R²) for a 2-dof chi-square
                    std_normal_logpdf(s) - (-(-0.5 * r2).exp()).ln_1p()
                }
            }
        }
    }

    /// Exact log-density of (f_t)_∗μ at x.
    pub fn log_density(self, t: f64, x: P2) -> f64 {
        match self {
            Self::Rot => {
                let (sn, cs) = t.sin_cos();
                let s = [(cs * x[0] - sn * x[1]) / 2.0, sn * x[0] + cs * x[1]];
                std_normal_logpdf(s) - 2f64.ln()
            }
            Self::Pol => {
                let mut total = 0.0;
                for preimage in self.pol_preimages(t, x) {
                    let (s, abs_det) = preimage;
                    total += (self.latent_log_density(s) - abs_det.ln()).exp();
                }
                total.ln()
            }
        }
    }

    /// Latent preimages of x under f_t^pol together with |det Df_t| there.
    /// A point can be reached with r > 0 or r < 0; φ lives in a window of
    /// width 4 < 2π so each sign of r gives at most one preimage.
    fn pol_preimages(self, t: f64, x: P2) -> Vec<(P2, f64)> {
        let rho = x[0].hypot(x[1]);
        let theta = x[0].atan2(x[1]);
        let lo = -POL_LATENT_RADIUS;
        let hi = POL_LATENT_RADIUS;
        let mut out = Vec::with_capacity(2);
        for (r, angle) in [(rho, theta), (-rho, theta + PI)] {
            let phi = 0.5 * t + wrap(angle - 0.5 * t);
            let s2 = 2.0 * phi - t;
            let s1 = match inverse_monotone(|v| radius(t, v), Some(&|v| radius_prime(t, v)), r, lo, hi, 1e-13) {
                Ok(v) => v,
                Err(_) => continue,
            };
            if s1 * s1 + s2 * s2 >= POL_LATENT_RADIUS * POL_LATENT_RADIUS {
                continue;
            }
            out.push(([s1, s2], r.abs() * radius_prime(t, s1) * 0.5));
        }
        out
    }

    /// Observational law at time t as a [`SampleTarget`].
    pub fn target(self, t: f64) -> DriftTarget {
        DriftTarget { scenario: self, t }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DriftTarget {
    pub scenario: DriftScenario,
    pub t: f64,
}

impl SampleTarget for DriftTarget {
    fn dim(&self) -> usize {
        2
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Point {
        let s = self.scenario.sample_latent(rng);
        self.scenario.map(self.t, s).to_vec()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        self.scenario.log_density(self.t, [x[0], x[1]])
    }
}
