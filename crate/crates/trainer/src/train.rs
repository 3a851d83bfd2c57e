//! Pretraining at t = 0 and the warm-started drift loop.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ica_lab::contrast::{c_oct, forward_kl, l1_recon, MetricEstimate, SampleBatch};
use ica_lab::{FnMap, LabError, Matrix};

use crate::adam::Adam;
use crate::error::{Result, TrainError};
use crate::model::{FlowModel, P2};
use crate::objective::{loss_and_grad, Anchor, LossParts};
use crate::rng::substream;
use crate::scenario::DriftScenario;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub steps: usize,
    pub batch: usize,
    pub time_points: usize,
    pub lr: f64,
    pub seed: u64,
    pub layers: usize,
    pub hidden: usize,
    /// Step budget for fitting f₀.
    pub pretrain_steps: usize,
    pub pretrain_kl_target: f64,
    pub pretrain_fail_kl: f64,
    /// Weight of mean |g⁻¹(f₀(s)) − Πs|² during pretraining only, Π the
    /// composed layer permutation.
    pub anchor_weight: f64,
    pub kl_check_every: usize,
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            steps: 1000,
            batch: 256,
            time_points: 10,
            lr: 1e-3,
            seed: 0,
            layers: 5,
            hidden: 15,
            pretrain_steps: 4000,
            pretrain_kl_target: 0.1,
            pretrain_fail_kl: 1.0,
            anchor_weight: 0.1,
            kl_check_every: 500,
            eval_samples: 4096,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("steps", self.steps),
            ("batch", self.batch),
            ("time_points", self.time_points),
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("kl_check_every", self.kl_check_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if self.eval_samples < ica_lab::contrast::MIN_KL_SAMPLES {
            return Err(TrainError::Config(format!(
                "eval_samples must be at least {}",
                ica_lab::contrast::MIN_KL_SAMPLES
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.anchor_weight >= 0.0) {
            return Err(TrainError::Config("lambda and anchor_weight must be nonnegative".into()));
        }
        if !(self.pretrain_kl_target > 0.0 && self.pretrain_fail_kl >= self.pretrain_kl_target) {
            return Err(TrainError::Config("need 0 < pretrain_kl_target <= pretrain_fail_kl".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// t_i = i / n for i = 1..=n.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.time_points).map(|i| i as f64 / self.time_points as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub layers: usize,
    pub hidden: usize,
    pub conds: Vec<usize>,
    pub permutations: Vec<[usize; 2]>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn of(model: &FlowModel, config: &TrainConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed: config.seed,
            config_hash: config.hash(),
            layers: model.layers(),
            hidden: model.hidden(),
            conds: model.conds().to_vec(),
            permutations: model.perms().to_vec(),
            params: model.params().to_vec(),
        }
    }

    pub fn restore(&self) -> Result<FlowModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(TrainError::Config(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.conds.len() != self.layers {
            return Err(TrainError::Config("checkpoint layer count mismatch".into()));
        }
        FlowModel::from_parts(self.hidden, self.conds.clone(), self.permutations.clone(), self.params.clone())
    }
}

/// Diagnostics at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRecord {
    pub t: f64,
    pub l1: MetricEstimate,
    pub kl: MetricEstimate,
    pub c_oct: MetricEstimate,
    pub final_loss: LossParts,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub steps: usize,
    pub kl: MetricEstimate,
    pub kl_checks: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub scenario: DriftScenario,
    pub config: TrainConfig,
    pub permutations: Vec<[usize; 2]>,
    pub pretrain: Option<PretrainSummary>,
    pub initial: Option<TimeRecord>,
    pub records: Vec<TimeRecord>,
    pub checkpoint: Option<Checkpoint>,
}

impl TrainTrace {
    fn new(scenario: DriftScenario, config: &TrainConfig, model: &FlowModel) -> Self {
        Self {
            scenario,
            config: config.clone(),
            permutations: model.perms().to_vec(),
            pretrain: None,
            initial: None,
            records: Vec::new(),
            checkpoint: None,
        }
    }

    pub fn last(&self) -> Option<&TimeRecord> {
        self.records.last()
    }

    /// Writes rows `t, l1, kl, c_oct, arm, seed`; pass `header = false` to append.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if header {
            w.write_record(["t", "l1", "kl", "c_oct", "arm", "seed"])?;
        }
        let arm = arm_label(self.config.lambda);
        for r in &self.records {
            w.write_record(&[
                format!("{}", r.t),
                format!("{:.10e}", r.l1.value),
                format!("{:.10e}", r.kl.value),
                format!("{:.10e}", r.c_oct.value),
                arm.clone(),
                self.config.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn arm_label(lambda: f64) -> String {
    format!("lambda={lambda}")
}

/// A model together with the optimizer state that produced it.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: FlowModel,
    pub optimizer: Adam,
    pub summary: PretrainSummary,
}

fn draw_batch(scenario: DriftScenario, t: f64, n: usize, rng: &mut dyn RngCore) -> (Vec<P2>, Vec<P2>) {
    let latents: Vec<P2> = (0..n).map(|_| scenario.sample_latent(rng)).collect();
    let xs = latents.iter().map(|&s| scenario.map(t, s)).collect();
    (xs, latents)
}

fn to_lab(e: TrainError) -> LabError {
    match e {
        TrainError::Lab(l) => l,
        // a non-finite inverse is a point the model cannot reach
        other => LabError::Singularity(other.to_string()),
    }
}

fn kl_at(model: &FlowModel, scenario: DriftScenario, t: f64, n: usize, rng: &mut dyn RngCore) -> Result<MetricEstimate> {
    let target = scenario.target(t);
    let logp = |x: &[f64]| model.log_density([x[0], x[1]]).unwrap_or(f64::NEG_INFINITY);
    Ok(forward_kl(&target, &logp, n, rng)?)
}

/// L1 reconstruction error, forward KL and C_OCT of g at time t.
pub fn evaluate(
    model: &FlowModel,
    scenario: DriftScenario,
    t: f64,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<(MetricEstimate, MetricEstimate, MetricEstimate)> {
    // read latents back in the labelling fixed by the permutations
    let owned = model.clone();
    let align = model.permutation_only();
    let g_inv = FnMap::new(2, "g_inv", move |x| {
        let (s, _) = owned.inverse([x[0], x[1]]).map_err(to_lab)?;
        align.forward(s).map(|(v, _)| v.to_vec()).map_err(to_lab)
    });
    let f_t = FnMap::new(2, "f_t", move |s| Ok(scenario.map(t, [s[0], s[1]]).to_vec()));
    let latents: Vec<_> = (0..n).map(|_| scenario.sample_latent(rng).to_vec()).collect();
    let l1 = l1_recon(&g_inv, &f_t, &SampleBatch::new(latents)?)?;

    let kl = kl_at(model, scenario, t, n, rng)?;

    let owned = model.clone();
    let g = FnMap::new(2, "g", {
        let m = owned.clone();
        move |s| m.forward([s[0], s[1]]).map(|(x, _)| x.to_vec()).map_err(to_lab)
    })
    .with_jacobian(move |s| {
        let (_, j) = owned.forward_with_jacobian([s[0], s[1]]).map_err(to_lab)?;
        Ok(Matrix::from_fn(2, 2, |r, c| j[r][c]))
    });
    let base = DriftScenario::Rot;
    let points: Vec<_> = (0..n).map(|_| base.sample_latent(rng).to_vec()).collect();
    let c = c_oct(&g, &SampleBatch::new(points)?)?;
    Ok((l1, kl, c))
}

/// Fits g(θ₀) ≈ f₀ by minimizing NLL + λ·C_OCT + w·|g⁻¹(f₀(s)) − s|² on
/// fresh batches, stopping once the forward KL drops below the target.
pub fn pretrain_t0(scenario: DriftScenario, config: &TrainConfig) -> Result<Pretrained> {
    config.validate()?;
    let mut model = FlowModel::new(
        config.layers,
        config.hidden,
        &mut substream(config.seed, "init"),
        &mut substream(config.seed, "permutations"),
    )?;
    let align = model.permutation_only();
    let mut adam = Adam::new(model.params().len(), config.lr);
    let mut sampling = substream(config.seed, "pretrain-sampling");
    let mut eval = substream(config.seed, "pretrain-eval");
    let mut checks = Vec::new();
    let mut steps = 0;
    let mut kl = None;
    while steps < config.pretrain_steps {
        let (xs, mut latents) = draw_batch(scenario, 0.0, config.batch, &mut sampling);
        for s in latents.iter_mut() {
            *s = align.inverse(*s)?.0;
        }
        let anchor = (config.anchor_weight > 0.0).then_some(Anchor { latents: &latents, weight: config.anchor_weight });
        let (_, grad) = loss_and_grad(&model, &xs, config.lambda, anchor)?;
        adam.step(model.params_mut(), &grad);
        steps += 1;
        if steps % config.kl_check_every == 0 || steps == config.pretrain_steps {
            let est = kl_at(&model, scenario, 0.0, config.eval_samples, &mut eval)?;
            checks.push((steps, est.value));
            let done = est.value < config.pretrain_kl_target;
            kl = Some(est);
            if done {
                break;
            }
        }
    }
    let kl = match kl {
        Some(k) => k,
        None => kl_at(&model, scenario, 0.0, config.eval_samples, &mut eval)?,
    };
    let summary = PretrainSummary { steps, kl, kl_checks: checks };
    if !(kl.value < config.pretrain_fail_kl) {
        let mut trace = TrainTrace::new(scenario, config, &model);
        trace.pretrain = Some(summary);
        trace.checkpoint = Some(Checkpoint::of(&model, config));
        return Err(TrainError::TrainingFailure { kl: kl.value, threshold: config.pretrain_fail_kl, trace: Box::new(trace) });
    }
    Ok(Pretrained { model, optimizer: adam, summary })
}

/// Pretrains at t = 0, then for each t_i warm-starts from θ_{i−1} and runs
/// `steps` Adam steps of NLL + λ·C_OCT on fresh batches from (f_{t_i})_∗μ.
pub fn drift_train(scenario: DriftScenario, config: &TrainConfig) -> Result<TrainTrace> {
    let pre = pretrain_t0(scenario, config)?;
    drift_from(scenario, config, pre)
}

/// The drift loop from an already pretrained model; the Adam moments carry over.
pub fn drift_from(scenario: DriftScenario, config: &TrainConfig, pre: Pretrained) -> Result<TrainTrace> {
    config.validate()?;
    let Pretrained { mut model, optimizer: mut adam, summary } = pre;
    let mut trace = TrainTrace::new(scenario, config, &model);
    trace.pretrain = Some(summary);
    let mut sampling = substream(config.seed, "sampling");
    let mut eval = substream(config.seed, "eval");

    let (l1, kl, c) = evaluate(&model, scenario, 0.0, config.eval_samples, &mut eval)?;
    trace.initial =
        Some(TimeRecord { t: 0.0, l1, kl, c_oct: c, final_loss: LossParts::default(), loss_curve: Vec::new() });

    for t in config.times() {
        let mut step = || -> Result<TimeRecord> {
            let mut curve = Vec::with_capacity(config.steps);
            let mut last = LossParts::default();
            for _ in 0..config.steps {
                let (xs, _) = draw_batch(scenario, t, config.batch, &mut sampling);
                let (parts, grad) = loss_and_grad(&model, &xs, config.lambda, None)?;
                adam.step(model.params_mut(), &grad);
                curve.push(parts.total);
                last = parts;
            }
            let (l1, kl, c_oct) = evaluate(&model, scenario, t, config.eval_samples, &mut eval)?;
            Ok(TimeRecord { t, l1, kl, c_oct, final_loss: last, loss_curve: curve })
        };
        match step() {
            Ok(r) => trace.records.push(r),
            Err(e) => {
                trace.checkpoint = Some(Checkpoint::of(&model, config));
                return Err(TrainError::Interrupted { source: Box::new(e), trace: Box::new(trace) });
            }
        }
    }
    trace.checkpoint = Some(Checkpoint::of(&model, config));
    Ok(trace)
}
