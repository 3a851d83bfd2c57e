//! Executes a parsed scenario and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use ica_lab::deformation::{boundary_vanishing, oct_constraint_residual, resonance_alpha, wave_residual};
use ica_lab::linalg::dist;
use ica_lab::maps::{
    classify_conformal, classify_oct, classify_volume_preserving, interior_points, ClassReport, MapClass, PolarMap,
};
use ica_lab::spurious::{
    build_xij, flow_map, prop1_build, prop1_rotated_family, radius_rotation_map, verify_mpt, verify_pushforward,
    GaussianMixture, MptReport, RadialDensity, RadiusRotationProfile, UniformCube,
};
use ica_lab::{LabError, Matrix, Point, SmoothMap};
use ica_lab_trainer::rng::substream;
use ica_lab_trainer::train::arm_label;
use ica_lab_trainer::{drift_train, TrainConfig, TrainTrace};

use crate::config::{
    DeformSpec, Expectation, Prop1Spec, RunSpec, ScenarioConfig, SpuriousSpec, TrainDriftSpec, VerifySpec,
};
use crate::error::{CliError, Result};
use crate::report::{provenance, CheckList, ResidualRow, RunReport};

pub const DEFAULT_OUT: &str = "ica-lab-out";

/// Everything a run produces before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: CheckList,
    pub residuals: Vec<ResidualRow>,
    pub traces: Vec<TrainTrace>,
}

/// Names the check a numeric error belongs to.
fn within<T>(check: &str, r: std::result::Result<T, LabError>) -> Result<T> {
    r.map_err(|e| match e {
        LabError::Argument(m) => CliError::Schema(format!("{check}: {m}")),
        other => CliError::Numeric(format!("{check}: {other}")),
    })
}

fn class_rows(out: &mut Outcome, name: &str, rep: &ClassReport) {
    out.residuals.extend(rep.worst.iter().map(|o| ResidualRow::new(name, &o.point, o.residual)));
}

fn mpt_rows(out: &mut Outcome, name: &str, rep: &MptReport) {
    out.residuals.extend(rep.worst.iter().map(|o| ResidualRow::new(name, &o.point, o.residual)));
}

fn class_name(c: MapClass) -> &'static str {
    match c {
        MapClass::Conformal => "conformal",
        MapClass::Oct => "oct",
        MapClass::VolumePreserving => "volume_preserving",
    }
}

fn verify(spec: &VerifySpec, out: &mut Outcome) -> Result<()> {
    let f = spec.map.build()?;
    let (lo, hi) = match (&spec.lo, &spec.hi) {
        (Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
        _ => spec.map.default_box(f.dim())?,
    };
    if lo.len() != f.dim() || hi.len() != f.dim() {
        return Err(CliError::Schema("lo/hi do not match the map dimension".into()));
    }
    let pts = interior_points(&lo, &hi, spec.points, 0.01);
    for &class in &spec.classes {
        let name = format!("classify_{}", class_name(class));
        let rep = within(
            &name,
            match class {
                MapClass::Conformal => classify_conformal(f.as_ref(), &pts, spec.tol),
                MapClass::Oct => classify_oct(f.as_ref(), &pts, spec.tol),
                MapClass::VolumePreserving => classify_volume_preserving(f.as_ref(), &pts, spec.tol),
            },
        )?;
        out.checks.at_most(&name, rep.max_residual, spec.tol)?;
        class_rows(out, &name, &rep);
    }
    if spec.check_determinant {
        let crate::config::MapSpec::Polar { d, inner, outer } = spec.map else { unreachable!("validated") };
        let polar = within("determinant_formula", PolarMap::new(d, inner, outer))?;
        let mut worst = 0.0f64;
        for p in &pts {
            let det = within("determinant_formula", polar.jacobian(p))?.det();
            let formula = polar.det_formula(p);
            let rel = (det - formula).abs() / formula.abs().max(1.0);
            worst = worst.max(rel);
        }
        out.checks.at_most("determinant_formula", worst, 1e-8)?;
    }
    Ok(())
}

fn spurious(spec: &SpuriousSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    match spec {
        SpuriousSpec::RadiusRotation { center, plane, amplitude, margin, t, points, tol } => {
            let d = center.len();
            let prof = RadiusRotationProfile::with_margin(center.clone(), *plane, *amplitude, *margin)?;
            let h = radius_rotation_map(&prof, *t);
            let pts = interior_points(&vec![0.0; d], &vec![1.0; d], *points, 0.01);
            let rep = within("volume_preserving", classify_volume_preserving(&h, &pts, *tol))?;
            out.checks.at_most("volume_preserving", rep.max_residual, *tol)?;
            class_rows(out, "volume_preserving", &rep);
            let mut rng = substream(seed, "sampling");
            let mut moved = 0.0f64;
            for _ in 0..*points {
                let mut s: Point = (0..d).map(|_| rng.gen::<f64>()).collect();
                let k = rng.gen_range(0..d);
                let depth = rng.gen::<f64>() * margin;
                s[k] = if rng.gen::<bool>() { depth } else { 1.0 - depth };
                let image = within("boundary_fixed", h.eval(&s))?;
                moved = moved.max(dist(&image, &s));
            }
            out.checks.at_most("boundary_fixed", moved, 0.0)?;
        }
        SpuriousSpec::MixtureFlow { i, j, times, steps, points, tol, mpt_tol } => {
            let p = Arc::new(GaussianMixture::three_component_2d());
            let field = build_xij(p.clone(), *i, *j)?.into_ref();
            let pts = interior_points(&[-3.0, -2.0], &[3.5, 3.5], *points, 0.0);
            for &t in times {
                let f = within("flow", flow_map(field.clone(), t, *steps))?;
                let vname = format!("volume_preserving@t={t}");
                let vol = within(&vname, classify_volume_preserving(&f, &pts, *tol))?;
                out.checks.at_most(&vname, vol.max_residual, *tol)?;
                class_rows(out, &vname, &vol);
                let mname = format!("mpt@t={t}");
                let mpt = within(&mname, verify_mpt(&f, p.as_ref(), &pts, *mpt_tol))?;
                out.checks.at_most(&mname, mpt.max_relative_residual, *mpt_tol)?;
                mpt_rows(out, &mname, &mpt);
            }
        }
    }
    Ok(())
}

fn prop1(spec: &Prop1Spec, seed: u64, out: &mut Outcome) -> Result<()> {
    let d = spec.d;
    let radial = RadialDensity::new(spec.profile.profile(), d)?;
    let f = within("prop1_build", prop1_build(&radial))?;
    let pts = interior_points(&vec![0.0; d], &vec![1.0; d], spec.points, 0.01);
    let oct = within("classify_oct", classify_oct(f.as_ref(), &pts, spec.tol))?;
    out.checks.at_most("classify_oct", oct.max_residual, spec.tol)?;
    class_rows(out, "classify_oct", &oct);
    let push = |f: &dyn SmoothMap, name: &str| -> Result<MptReport> {
        let images = pts.iter().map(|s| f.eval(s)).collect::<std::result::Result<Vec<_>, _>>();
        let images = within(name, images)?;
        within(name, verify_pushforward(f, &UniformCube { dim: d }, &radial, &images, spec.density_tol))
    };
    let rep = push(f.as_ref(), "pushforward")?;
    out.checks.at_most("pushforward", rep.max_relative_residual, spec.density_tol)?;
    mpt_rows(out, "pushforward", &rep);

    if spec.rotations > 0 {
        let mut rng = substream(seed, "rotations");
        let mut maps = Vec::with_capacity(spec.rotations);
        for k in 0..spec.rotations {
            let r = Matrix::random_rotation(d, &mut rng);
            let name = format!("rotated_{k}_pushforward");
            let g = within(&name, prop1_rotated_family(&radial, &r))?;
            let rep = push(g.as_ref(), &name)?;
            out.checks.at_most(&name, rep.max_relative_residual, spec.density_tol)?;
            mpt_rows(out, &name, &rep);
            maps.push(g);
        }
        let grid = interior_points(&vec![0.0; d], &vec![1.0; d], 200, 0.01);
        let mut closest = f64::INFINITY;
        for a in 0..maps.len() {
            for b in a + 1..maps.len() {
                let mut sup = 0.0f64;
                for s in &grid {
                    let (x, y) = (within("separation", maps[a].eval(s))?, within("separation", maps[b].eval(s))?);
                    sup = sup.max(dist(&x, &y));
                }
                closest = closest.min(sup);
            }
        }
        if maps.len() > 1 {
            out.checks.above("pairwise_separation", closest, spec.min_separation)?;
        }
    }
    Ok(())
}

fn deform(spec: &DeformSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    let f0 = spec.base.build()?;
    let x = spec.field.build()?;
    let d = f0.dim();
    let tol = spec.tolerances;
    let pts = interior_points(&vec![0.0; d], &vec![1.0; d], spec.points, 0.01);
    let rep = within("first_order", oct_constraint_residual(f0.as_ref(), x.as_ref(), &pts, tol))?;
    match spec.expect {
        Expectation::Admissible => out.checks.at_most("first_order", rep.first_order_max, tol.first_order)?,
        Expectation::Violates => out.checks.above("first_order", rep.first_order_max, tol.first_order)?,
    }
    for pr in &rep.pairs {
        let name = format!("first_order[{},{}]", pr.i, pr.j);
        out.residuals.push(ResidualRow { check: name, point: String::new(), residual: pr.max_residual });
    }
    out.checks.at_most("divergence", rep.divergence_max, tol.divergence)?;
    if spec.wave {
        for i in 0..d {
            let name = format!("wave[{i}]");
            let w = within(&name, wave_residual(f0.as_ref(), x.as_ref(), i, &pts))?;
            out.checks.at_most(&name, w, tol.wave)?;
        }
    }
    if let Some(eps) = spec.boundary_epsilon {
        let mut rng = substream(seed, "sampling");
        let b = within("boundary", boundary_vanishing(x.as_ref(), eps, spec.points, &mut rng))?;
        out.checks.at_most("boundary", b, tol.boundary)?;
    }
    for (k, q) in spec.resonance.iter().enumerate() {
        let name = format!("resonance[{k}]");
        let r = within(&name, resonance_alpha(&q.mu, &q.m, q.i))?;
        out.checks.push(crate::report::Check {
            name,
            pass: q.expect_resonant.map_or(true, |e| e == r.is_resonant),
            value: Some(r.alpha),
            threshold: None,
            detail: Some(if r.is_resonant { "resonant" } else { "non-resonant" }.into()),
        })?;
    }
    Ok(())
}

fn train_drift(spec: &TrainDriftSpec, seed: u64, out: &mut Outcome) -> Result<()> {
    let runs: Vec<_> = spec
        .lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = TrainConfig { lambda, seed, ..spec.train.clone() };
            (lambda, drift_train(spec.scenario, &cfg))
        })
        .collect();
    for (lambda, result) in runs {
        let arm = arm_label(lambda);
        match result {
            Ok(trace) => {
                let n = trace.records.len();
                out.checks.push(crate::report::Check {
                    name: format!("{arm}/time_points"),
                    pass: n == spec.train.time_points,
                    value: Some(n as f64),
                    threshold: Some(spec.train.time_points as f64),
                    detail: None,
                })?;
                let kl = trace.records.iter().map(|r| r.kl.value).fold(f64::NEG_INFINITY, f64::max);
                out.checks.at_most(format!("{arm}/max_forward_kl"), kl, spec.kl_max)?;
                if let (Some(bound), true) = (spec.c_oct_max, lambda > 0.0) {
                    let c = trace.last().map_or(f64::NAN, |r| r.c_oct.value);
                    out.checks.at_most(format!("{arm}/final_c_oct"), c, bound)?;
                }
                out.traces.push(trace);
            }
            Err(e) => {
                out.checks.push(crate::report::Check {
                    name: format!("{arm}/training"),
                    pass: false,
                    value: None,
                    threshold: None,
                    detail: Some(e.to_string()),
                })?;
            }
        }
    }
    Ok(())
}

pub fn run(cfg: &ScenarioConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut out = Outcome::default();
    match &cfg.run {
        RunSpec::Verify(s) => verify(s, &mut out)?,
        RunSpec::Spurious(s) => spurious(s, cfg.seed, &mut out)?,
        RunSpec::Prop1(s) => prop1(s, cfg.seed, &mut out)?,
        RunSpec::DeformCheck(s) => deform(s, cfg.seed, &mut out)?,
        RunSpec::TrainDrift(s) => train_drift(s, cfg.seed, &mut out)?,
    }
    Ok(out)
}

/// Hash of everything that affects results; the output directory does not.
pub fn config_hash(cfg: &ScenarioConfig) -> Result<String> {
    let mut cfg = cfg.clone();
    cfg.out = None;
    let json = serde_json::to_vec(&cfg)?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_residuals(path: &Path, rows: &[ResidualRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["check", "point", "residual"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_traces(path: &Path, traces: &[TrainTrace]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    if traces.is_empty() {
        use std::io::Write;
        writeln!(file, "t,l1,kl,c_oct,arm,seed")?;
    }
    for (k, t) in traces.iter().enumerate() {
        t.write_csv(&mut file, k == 0)?;
    }
    Ok(())
}

/// Runs the scenario, writes report.json plus CSV outputs under the output
/// directory and returns the report.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunReport> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let outcome = run(cfg)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir)?;
    let mut artifacts = Vec::new();
    if matches!(cfg.run, RunSpec::TrainDrift(_)) {
        let p = dir.join("trace.csv");
        write_traces(&p, &outcome.traces)?;
        artifacts.push(p);
        let p = dir.join("traces.json");
        fs::write(&p, serde_json::to_vec_pretty(&outcome.traces)?)?;
        artifacts.push(p);
    } else {
        let p = dir.join("residuals.csv");
        write_residuals(&p, &outcome.residuals)?;
        artifacts.push(p);
    }
    let checks = outcome.checks.into_vec();
    let report_path = dir.join("report.json");
    artifacts.push(report_path.clone());
    let report = RunReport {
        name: cfg.name.clone(),
        kind: cfg.run.kind().as_str().to_string(),
        seed: cfg.seed,
        config_hash: config_hash(cfg)?,
        provenance: provenance(),
        started_unix: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        pass: checks.iter().all(|c| c.pass),
        checks,
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
    };
    fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}
