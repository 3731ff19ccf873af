use std::cell::Cell;

use nlgrad_core::optim::{HyperParams, OptimizerKind};
use nlgrad_core::problems::{QuadraticSpec, ToySpec};
use nlgrad_core::search::{grid_sweep, run_medium_search, sample_hyperparams, SearchSpec};
use nlgrad_core::train::{Executor, ProblemConfig, RunConfig, RunRecord, Sequential};
use nlgrad_core::{Result, RngStream};

struct Counting(Cell<usize>);

impl Executor for Counting {
    fn run_all(&self, cfgs: &[RunConfig]) -> Vec<Result<RunRecord>> {
        self.0.set(self.0.get() + cfgs.len());
        Sequential.run_all(cfgs)
    }
}

fn toy_base() -> RunConfig {
    let problem = ProblemConfig::ToySingle { spec: ToySpec::default(), init: [0.01, 0.0001] };
    RunConfig { epochs: 3, batch_size: 8, batches_per_epoch: 10, ..RunConfig::new(problem, OptimizerKind::NlSgd, HyperParams::default()) }
}

#[test]
fn sampler_distribution() {
    let spec = SearchSpec::default();
    let mut rng = RngStream::new(8);
    let n = 10_000;
    let mut low_half = 0;
    let mut counts = [0usize; 6];
    for _ in 0..n {
        let hp = sample_hyperparams(&spec, &mut rng).unwrap();
        assert!((1e-4..=1.0).contains(&hp.alpha));
        assert_eq!(hp.rho, 0.9);
        if hp.alpha <= 1e-2 {
            low_half += 1;
        }
        let k = spec.nu_choices.iter().position(|&v| v == hp.nu).expect("ν from the choice set");
        counts[k] += 1;
    }
    assert!((low_half as f64 / n as f64 - 0.5).abs() <= 0.03);
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() <= 0.02);
    }
}

#[test]
fn search_is_deterministic_and_counts_runs() {
    let spec = SearchSpec { budget: 12, final_repeats: 4, ..SearchSpec::default() };
    let counter = Counting(Cell::new(0));
    let a = run_medium_search(&toy_base(), OptimizerKind::NlSgd, &spec, 3, &counter).unwrap();
    assert_eq!(counter.0.get(), 16);
    let b = run_medium_search(&toy_base(), OptimizerKind::NlSgd, &spec, 3, &Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.samples.len(), 12);
    assert_eq!(a.final_records.len(), 4);

    let best = a.best_sample().unwrap();
    assert!(a.samples.iter().filter(|s| !s.flagged).all(|s| s.score >= best.score));
}

#[test]
fn budget_of_one_selects_it() {
    let spec = SearchSpec { budget: 1, final_repeats: 2, ..SearchSpec::default() };
    let r = run_medium_search(&toy_base(), OptimizerKind::Sgd, &spec, 0, &Sequential).unwrap();
    assert_eq!(r.best, Some(0));
    assert_eq!(r.samples[0].hyper.nu, 1.0);
}

#[test]
fn grid_nu_one_column_is_the_sgd_sweep() {
    let base = RunConfig {
        epochs: 2,
        batches_per_epoch: 10,
        ..RunConfig::new(ProblemConfig::QuadraticDeep(QuadraticSpec::default()), OptimizerKind::Sgd, HyperParams::sgd(0.01))
    };
    let lrs = [0.001, 0.01, 0.03];
    let nl = grid_sweep(&base, OptimizerKind::NlSgd, &[0.5, 1.0], &lrs, 2, &Sequential).unwrap();
    let sgd = grid_sweep(&base, OptimizerKind::Sgd, &[1.0], &lrs, 2, &Sequential).unwrap();
    for j in 0..lrs.len() {
        let (a, b) = (nl.cell(1, j), sgd.cell(0, j));
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn single_cell_equals_training_run() {
    let base = toy_base();
    let grid = grid_sweep(&base, OptimizerKind::NlSgd, &[0.5], &[0.05], 1, &Sequential).unwrap();
    let cfg = RunConfig {
        hyper: HyperParams { alpha: 0.05, nu: 0.5, ..base.hyper },
        seed: nlgrad_core::rng::derive_seed(base.seed, 0),
        ..base
    };
    let r = nlgrad_core::train::run_training(&cfg).unwrap();
    assert_eq!(grid.cell(0, 0).mean, Some(r.final_valid_metric()));
}
