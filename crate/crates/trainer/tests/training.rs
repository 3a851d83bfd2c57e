use ica_lab_trainer::{drift_from, drift_train, pretrain_t0, Checkpoint, DriftScenario, TrainConfig};

fn short(seed: u64) -> TrainConfig {
    TrainConfig { steps: 60, time_points: 3, eval_samples: 512, seed, ..TrainConfig::default() }
}

#[test]
fn pretraining_reaches_the_kl_target() {
    for scenario in [DriftScenario::Rot, DriftScenario::Pol] {
        let cfg = short(1);
        let pre = pretrain_t0(scenario, &cfg).unwrap();
        assert!(pre.summary.kl.value < cfg.pretrain_kl_target, "{scenario}: {:?}", pre.summary);
        assert!(pre.summary.steps <= cfg.pretrain_steps);
        assert!(pre.summary.kl_checks.iter().all(|(step, _)| step % cfg.kl_check_every == 0));
    }
}

#[test]
fn drift_trace_covers_every_time_point_and_reproduces() {
    let cfg = short(5);
    let a = drift_train(DriftScenario::Rot, &cfg).unwrap();
    let ts: Vec<f64> = a.records.iter().map(|r| r.t).collect();
    assert_eq!(ts, cfg.times());
    assert!(a.records.iter().all(|r| r.loss_curve.len() == cfg.steps));
    let b = drift_from(DriftScenario::Rot, &cfg, pretrain_t0(DriftScenario::Rot, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);

    let ck: &Checkpoint = a.checkpoint.as_ref().unwrap();
    let json = serde_json::to_string(ck).unwrap();
    let back: Checkpoint = serde_json::from_str(&json).unwrap();
    let model = back.restore().unwrap();
    assert_eq!(model.params(), ck.restore().unwrap().params());
    assert_eq!(back.config_hash, cfg.hash());

    let mut csv = Vec::new();
    a.write_csv(&mut csv, true).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + cfg.time_points);
}

#[test]
fn seeds_give_different_runs() {
    let a = drift_train(DriftScenario::Rot, &short(1)).unwrap();
    let b = drift_train(DriftScenario::Rot, &short(2)).unwrap();
    assert_ne!(a.last().unwrap().l1.value, b.last().unwrap().l1.value);
}
