use nlgrad_core::optim::{HyperParams, OptimizerKind};
use nlgrad_core::problems::{QuadraticSpec, ToySpec};
use nlgrad_core::train::{run_repeats, run_training, ProblemConfig, RunConfig, ScheduleKind, Sequential};

fn quadratic(kind: OptimizerKind, hp: HyperParams, epochs: usize) -> RunConfig {
    RunConfig { epochs, batches_per_epoch: 20, ..RunConfig::new(ProblemConfig::QuadraticDeep(QuadraticSpec::default()), kind, hp) }
}

#[test]
fn replay_is_deterministic() {
    let cfg = quadratic(OptimizerKind::NlMomentum, HyperParams::momentum(0.01, 0.9).with_nu(0.7), 3);
    assert_eq!(run_training(&cfg).unwrap(), run_training(&cfg).unwrap());
}

#[test]
fn zero_learning_rate_leaves_noiseless_runs_identical() {
    let spec = ToySpec { sigma: 0.0, ..ToySpec::default() };
    let cfg = RunConfig {
        epochs: 5,
        batch_size: 4,
        batches_per_epoch: 3,
        ..RunConfig::new(ProblemConfig::ToySingle { spec, init: [0.2, 0.3] }, OptimizerKind::Sgd, HyperParams::sgd(0.0))
    };
    let rep = run_repeats(&cfg, 10, false, &Sequential).unwrap();
    let first = &rep.records[0];
    for r in &rep.records {
        assert_eq!(r.final_metrics, first.final_metrics);
        assert_eq!(r.final_metrics.valid, r.initial.valid);
        assert_eq!(r.final_metrics.test, r.initial.test);
    }
    assert_eq!(rep.summary.std, 0.0);
}

#[test]
fn flagged_exactly_when_training_blows_up() {
    let stable = run_training(&quadratic(OptimizerKind::Sgd, HyperParams::sgd(0.01), 2)).unwrap();
    assert!(!stable.flagged && stable.flag_reason.is_none());
    assert!(stable.final_metrics.train_loss.is_finite());

    let wild = run_training(&quadratic(OptimizerKind::Sgd, HyperParams::sgd(1.0), 50)).unwrap();
    assert!(wild.flagged);
    assert!(wild.flag_reason.is_some());
    assert!(wild.epochs.len() < 50);
}

#[test]
fn annihilation_only_touches_the_tail() {
    let mut cfg = quadratic(OptimizerKind::Sgd, HyperParams::sgd(0.02), 8);
    cfg.schedule = ScheduleKind::Annihilation;
    let r = run_training(&cfg).unwrap();
    let lrs: Vec<f64> = r.epochs.iter().map(|e| e.lr).collect();
    assert_eq!(lrs[..3], [0.02; 3]);
    assert!(lrs[3..].iter().all(|&l| (l - 0.002).abs() < 1e-15));
}

#[test]
fn step_count_follows_epoch_definition() {
    let r = run_training(&quadratic(OptimizerKind::Sgd, HyperParams::sgd(0.01), 4)).unwrap();
    assert_eq!(r.steps, 80);
    assert_eq!(r.epochs.len(), 4);
}
