//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::cell::Cell;
use std::time::Instant;

use nlgrad::core::optim::{HyperParams, Optimizer, OptimizerKind, ParamSet};
use nlgrad::core::problems::mlp::loss_grad as mlp_loss_grad;
use nlgrad::core::problems::toy::{expected_single_loss, sample_inputs};
use nlgrad::core::problems::{
    toy_single_grad, toy_three_product_step, BatchSource, CorrelatedMlpSpec, MlpClassifier, Objective,
    QuadraticDeep, QuadraticSpec, ToySingleNode, ToySpec, ToyThreeNode,
};
use nlgrad::core::search::{grid_sweep, log_space, run_medium_search, sample_hyperparams, SearchResult, SearchSpec};
use nlgrad::core::snr::{node_snr, optimal_weights, snr_distance, NodeWeights, SnrInputs};
use nlgrad::core::train::{
    mean_std, run_training, Executor, ProblemConfig, RunConfig, RunRecord, ScheduleKind, Sequential,
};
use nlgrad::core::transform::power_sign;
use nlgrad::core::{Result as CoreResult, RngStream, Tensor};
use nlgrad::exec::Parallel;
use nlgrad::grid::export_grid;
use nlgrad::store::{write_records, RecordStore};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Context {
    exec: Parallel,
    nl_search: Option<SearchResult>,
}

fn quadratic_base(kind: OptimizerKind) -> RunConfig {
    RunConfig {
        epochs: 100,
        batch_size: 128,
        seed: 0,
        ..RunConfig::new(ProblemConfig::QuadraticDeep(QuadraticSpec::default()), kind, HyperParams::default())
    }
}

fn criterion_1(_: &mut Context) -> Outcome {
    let mut rng = RngStream::new(1);
    let mut failures = Vec::new();
    let n = 10_000;
    for nu in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mut bad = 0;
        for _ in 0..n {
            let mag = |rng: &mut RngStream| 10f64.powf(rng.uniform_range(-8.0, 8.0));
            let sign = if rng.below(2) == 0 { -1.0 } else { 1.0 };
            let x = sign * mag(&mut rng);
            let y = if rng.below(2) == 0 { -1.0 } else { 1.0 } * mag(&mut rng);
            let c = mag(&mut rng);
            let h = |v: f64| power_sign(v, nu);

            let mut ok = h(x).signum() == x.signum() && h(x) != 0.0;
            ok &= h(-x).to_bits() == (-h(x)).to_bits();
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            ok &= h(lo) <= h(hi);
            let scaled = c.powf(nu) * h(x);
            ok &= (h(c * x) - scaled).abs() <= 1e-12 * scaled.abs();
            if nu > 0.0 && nu < 1.0 {
                let (a, b) = (x.abs().min(y.abs()), x.abs().max(y.abs()));
                if a < b {
                    ok &= h(b) / h(a) <= (b / a) * (1.0 + 1e-12);
                }
            }
            if !ok {
                bad += 1;
            }
        }
        if bad > 0 {
            failures.push(format!("ν={nu}: {bad} failures"));
        }
    }
    if failures.is_empty() {
        Outcome::new(true, "5 ν values x 10^4 scalars, zero failures")
    } else {
        Outcome::new(false, failures.join("; "))
    }
}

fn trajectory(problem: &QuadraticDeep, kind: OptimizerKind, hp: HyperParams) -> Vec<f64> {
    let mut params = problem.init_params(&mut RngStream::new(0));
    let mut opt = Optimizer::new(kind, hp, &params).unwrap();
    let mut rng = RngStream::new(5);
    let mut path = Vec::new();
    for _ in 0..100 {
        let batch = problem.draw_batch(BatchSource::Fresh { size: 128, rng: &mut rng });
        let at = opt.lookahead(&params, hp.alpha).unwrap().unwrap_or_else(|| params.clone());
        let (_, g) = problem.loss_grad(&at, &batch).unwrap();
        opt.step(&mut params, &g, hp.alpha).unwrap();
        path.extend(params.flatten());
    }
    path
}

fn criterion_2(_: &mut Context) -> Outcome {
    let problem = QuadraticDeep::new(QuadraticSpec::default()).unwrap();
    let pairs = [
        (OptimizerKind::NlSgd, OptimizerKind::Sgd, HyperParams::nl(0.01, 1.0)),
        (OptimizerKind::NlMomentum, OptimizerKind::Momentum, HyperParams::momentum(0.005, 0.9)),
        (OptimizerKind::NlNag, OptimizerKind::Nag, HyperParams::momentum(0.005, 0.9)),
        (OptimizerKind::NlSgd, OptimizerKind::SignSgd, HyperParams::nl(0.001, 0.0)),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (nl, base, hp) in pairs {
        let a = trajectory(&problem, nl, hp);
        let b = trajectory(&problem, base, hp);
        let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        pass &= dev < 1e-12 && a.iter().all(|v| v.is_finite());
        parts.push(format!("{nl}(ν={}) vs {base}: {dev:.1e}", hp.nu));
    }
    Outcome::new(pass, parts.join(", "))
}

fn fd_error(params: &ParamSet, analytic: &[f64], loss: impl Fn(&ParamSet) -> f64) -> f64 {
    let h = 1e-6;
    let x0 = params.flatten();
    let mut p = params.clone();
    let mut numeric = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        let mut x = x0.clone();
        x[i] = x0[i] + h;
        p.assign_flat(&x).unwrap();
        let up = loss(&p);
        x[i] = x0[i] - h;
        p.assign_flat(&x).unwrap();
        numeric[i] = (up - loss(&p)) / (2.0 * h);
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(&numeric)).max(1e-300)
}

fn criterion_3(_: &mut Context) -> Outcome {
    let mut rng = RngStream::new(3);

    let quad = QuadraticDeep::new(QuadraticSpec::default()).unwrap();
    let qb = quad.draw_batch(BatchSource::Fresh { size: 32, rng: &mut rng });
    let mut qp = quad.init_params(&mut rng);
    let mut x = qp.flatten();
    rng.fill_normal(&mut x, 0.0, 1.0);
    qp.assign_flat(&x).unwrap();
    let qg = quad.loss_grad(&qp, &qb).unwrap().1.flatten();
    let e_quad = fd_error(&qp, &qg, |p| quad.loss_grad(p, &qb).unwrap().0);

    let tb = sample_inputs(1.0, 0.3, 64, &mut rng);
    let single = ToySingleNode { v1: 0.3, v2: -0.2, a: 1.0, sigma: 0.3 };
    let sp = ParamSet::single(Tensor::vector(vec![single.v1, single.v2]));
    let sg = toy_single_grad(&single, &tb).unwrap().1;
    let e_single = fd_error(&sp, &sg, |p| {
        let v = p.flatten();
        toy_single_grad(&ToySingleNode { v1: v[0], v2: v[1], ..single }, &tb).unwrap().0
    });

    let three = ToyThreeNode { w11: 0.4, w12: -0.7, w21: 0.2, w22: 1.1, a: 1.0, sigma: 0.3 };
    let g = three.loss_grad(&tb).unwrap().1;
    let e_three = fd_error(&three.to_params(), &[g[0], g[2], g[1], g[3]], |p| {
        three.with_params(p).loss_grad(&tb).unwrap().0
    });

    let spec = CorrelatedMlpSpec::default();
    let sizes = [spec.data.input_dim, spec.hidden[0], 2];
    let model = MlpClassifier::init(&sizes, &mut rng).unwrap();
    let inputs = Tensor::sample_gaussian(&[16, sizes[0]], 0.0, 1.0, &mut rng).unwrap();
    let labels: Vec<usize> = (0..16).map(|_| rng.below(2)).collect();
    let mg = mlp_loss_grad(&model.params, &inputs, &labels).unwrap().1.flatten();
    let e_mlp = fd_error(&model.params, &mg, |p| mlp_loss_grad(p, &inputs, &labels).unwrap().0);

    let pass = e_quad < 1e-6 && e_single < 1e-6 && e_three < 1e-6 && e_mlp < 1e-5;
    Outcome::new(
        pass,
        format!("relative errors: quadratic {e_quad:.1e}, single {e_single:.1e}, three {e_three:.1e}, mlp {e_mlp:.1e}"),
    )
}

fn criterion_4(ctx: &mut Context) -> Outcome {
    let spec = SearchSpec::default();
    let sgd = run_medium_search(&quadratic_base(OptimizerKind::Sgd), OptimizerKind::Sgd, &spec, 0, &ctx.exec).unwrap();
    let nl = run_medium_search(&quadratic_base(OptimizerKind::NlSgd), OptimizerKind::NlSgd, &spec, 0, &ctx.exec).unwrap();
    let (Some(s), Some(n)) = (sgd.summary.clone(), nl.summary.clone()) else {
        return Outcome::new(false, "a search found no finite sample");
    };
    let in_window = (84.0..=90.0).contains(&s.mean);
    let ordering = n.mean >= s.mean;
    let spread = n.std < s.std;
    let best_nu = nl.best_sample().map(|b| b.hyper.nu).unwrap_or(f64::NAN);
    ctx.nl_search = Some(nl);
    Outcome::new(
        in_window && ordering && spread,
        format!(
            "SGD {:.2} ± {:.2} (in [84, 90]: {in_window}); NL-SGD {:.2} ± {:.2}, ν={best_nu} (mean >= SGD: {ordering}; std < SGD: {spread})",
            s.mean, s.std, n.mean, n.std
        ),
    )
}

fn criterion_5(ctx: &mut Context) -> Outcome {
    if ctx.nl_search.is_none() {
        let spec = SearchSpec::default();
        let base = quadratic_base(OptimizerKind::NlSgd);
        ctx.nl_search = Some(run_medium_search(&base, OptimizerKind::NlSgd, &spec, 0, &ctx.exec).unwrap());
    }
    let nl = ctx.nl_search.as_ref().unwrap();
    let plain: Vec<f64> = nl.final_records.iter().map(RunRecord::final_test_metric).collect();
    let annealed_cfgs: Vec<RunConfig> = nl
        .final_records
        .iter()
        .map(|r| RunConfig { schedule: ScheduleKind::Annihilation, ..r.config.clone() })
        .collect();
    let annealed: Vec<f64> = ctx
        .exec
        .run_all(&annealed_cfgs)
        .into_iter()
        .map(|r| r.unwrap().final_test_metric())
        .collect();
    let (a, b) = (mean_std(&plain).0, mean_std(&annealed).0);
    Outcome::new(
        a - b >= 0.5,
        format!("NL-SGD constant {a:.3} -> annihilation {b:.3}: reduction {:.3} (need >= 0.5)", a - b),
    )
}

fn criterion_6(_: &mut Context) -> Outcome {
    let problem = ProblemConfig::ToySingle { spec: ToySpec::default(), init: [0.01, 0.0001] };
    let cfg = RunConfig {
        epochs: 5000,
        batch_size: 32,
        batches_per_epoch: 1,
        eval_every: 5000,
        seed: 0,
        ..RunConfig::new(problem, OptimizerKind::Sgd, HyperParams::sgd(0.01))
    };
    let record = run_training(&cfg).unwrap();
    let milestone = record
        .products
        .as_deref()
        .unwrap_or_default()
        .iter()
        .enumerate()
        .find(|(_, v)| (v[0] + v[1] - 1.0).abs() < 0.05);
    let (gap_ok, gap_detail) = match milestone {
        Some((step, v)) => {
            let gap = (v[0] - v[1]).abs();
            (gap > 0.5, format!("first |v1+v2-1| < 0.05 at step {} with |v1-v2| = {gap:.4} (need > 0.5)", step + 1))
        }
        None => (false, "never reached |v1+v2-1| < 0.05".to_string()),
    };

    let spec = ToySpec::default();
    let (mut best, mut at) = (f64::INFINITY, (0.0, 0.0));
    for i in 0..=1000 {
        for j in 0..=1000 {
            let (v1, v2) = (i as f64 * 1e-3, j as f64 * 1e-3);
            let l = expected_single_loss(v1, v2, spec.a, spec.sigma);
            if l < best {
                best = l;
                at = (v1, v2);
            }
        }
    }
    let grid_ok = (at.0 - at.1).abs() <= 1e-3 + 1e-12;
    Outcome::new(
        gap_ok && grid_ok,
        format!("{gap_detail}; grid argmin ({:.3}, {:.3}) equal within resolution: {grid_ok}", at.0, at.1),
    )
}

fn milestone_gap(kind: OptimizerKind, nu: f64, seed: u64) -> Option<f64> {
    let problem = ProblemConfig::ToyThree { spec: ToySpec::default(), w: 0.1, kappa: 0.5 };
    let cfg = RunConfig {
        epochs: 3000,
        batch_size: 32,
        batches_per_epoch: 1,
        eval_every: 3000,
        seed,
        ..RunConfig::new(problem, kind, HyperParams::nl(0.01, nu))
    };
    run_training(&cfg)
        .ok()?
        .products?
        .into_iter()
        .find(|p| (p[0] + p[1] - 1.0).abs() < 0.05)
        .map(|p| (p[0] - p[1]).abs())
}

fn criterion_7(_: &mut Context) -> Outcome {
    let wins = (0..10)
        .filter(|&seed| match (milestone_gap(OptimizerKind::NlSgd, 0.5, seed), milestone_gap(OptimizerKind::Sgd, 1.0, seed)) {
            (Some(nl), Some(gd)) => nl < gd,
            _ => false,
        })
        .count();

    let mut rng = RngStream::new(17);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = ToyThreeNode {
            w11: rng.uniform_range(-1.0, 1.0),
            w12: rng.uniform_range(-1.0, 1.0),
            w21: rng.uniform_range(-1.0, 1.0),
            w22: rng.uniform_range(-1.0, 1.0),
            a: 1.0,
            sigma: 0.1,
        };
        let batch = sample_inputs(1.0, 0.1, 1 + rng.below(32), &mut rng);
        let step = toy_three_product_step(&m, &batch, rng.uniform_range(1e-4, 0.1)).unwrap();
        for i in 0..2 {
            worst = worst.max((step.closed_form[i] - step.backprop[i]).abs());
        }
    }
    Outcome::new(
        wins >= 8 && worst < 1e-10,
        format!("NL-SGD gap smaller than GD in {wins}/10 seeds; closed form vs backprop max deviation {worst:.1e}"),
    )
}

fn random_snr_inputs(k: usize, rng: &mut RngStream) -> SnrInputs {
    let r = 1 + rng.below(k);
    let mut a = vec![0.0; k * r];
    rng.fill_normal(&mut a, 0.0, 1.0);
    let c: Vec<f64> = (0..k * k)
        .map(|ij| (0..r).map(|t| a[(ij / k) * r + t] * a[(ij % k) * r + t]).sum())
        .collect();
    let noise = (0..k).map(|_| rng.uniform_range(0.1, 2.0)).collect();
    SnrInputs::new(Tensor::matrix(k, k, c).unwrap(), noise).unwrap()
}

fn criterion_8(_: &mut Context) -> Outcome {
    let mut rng = RngStream::new(8);
    let mut losses = 0;
    for _ in 0..20 {
        let k = 2 + rng.below(9);
        let inputs = random_snr_inputs(k, &mut rng);
        let best = node_snr(&optimal_weights(&inputs, 1.0).unwrap(), &inputs).unwrap();
        for _ in 0..1000 {
            let mut w = vec![0.0; k];
            rng.fill_normal(&mut w, 0.0, 1.0);
            let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let w = NodeWeights::new(w.iter().map(|v| v / n).collect());
            if node_snr(&w, &inputs).unwrap() > best * (1.0 + 1e-12) {
                losses += 1;
            }
        }
    }

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let inputs = random_snr_inputs(2, &mut rng);
        let steps = 200_000;
        let (mut angle, mut best) = (0.0, f64::MIN);
        for s in 0..steps {
            let t = std::f64::consts::PI * s as f64 / steps as f64;
            let v = node_snr(&NodeWeights::new(vec![t.cos(), t.sin()]), &inputs).unwrap();
            if v > best {
                best = v;
                angle = t;
            }
        }
        let grid = NodeWeights::new(vec![angle.cos(), angle.sin()]);
        let d = snr_distance(&grid, &optimal_weights(&inputs, 1.0).unwrap()).unwrap();
        worst = worst.max((1.0 - d).clamp(-1.0, 1.0).acos());
    }
    Outcome::new(
        losses == 0 && worst < 1e-3,
        format!("random directions beating the optimum: {losses}/20000; worst 2-input angular gap {worst:.1e} rad"),
    )
}

fn criterion_9(ctx: &mut Context) -> Outcome {
    let base = RunConfig {
        epochs: 20,
        batch_size: 128,
        seed: 0,
        ..RunConfig::new(ProblemConfig::CorrelatedMlp(CorrelatedMlpSpec::default()), OptimizerKind::NlSgd, HyperParams::default())
    };
    let nus = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let lrs = log_space(1e-3, 1.0, 10);
    let grid = grid_sweep(&base, OptimizerKind::NlSgd, &nus, &lrs, 5, &ctx.exec).unwrap();
    let best_nl = grid.best_in(|c| c.nu < 1.0).and_then(|c| c.mean).unwrap_or(f64::NAN);
    let best_sgd = grid.best_in(|c| c.nu == 1.0).and_then(|c| c.mean).unwrap_or(f64::NAN);
    let ridge = grid.best_lr_per_nu();
    let monotone = ridge.iter().all(Option::is_some)
        && ridge.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap());
    let ridge_text: Vec<String> = ridge.iter().map(|l| l.map_or("-".into(), |v| format!("{v:.4}"))).collect();
    Outcome::new(
        best_nl >= best_sgd && monotone,
        format!(
            "best NL cell {best_nl:.4} vs best SGD cell {best_sgd:.4}; best lr per ν [{}] nonincreasing: {monotone}",
            ridge_text.join(", ")
        ),
    )
}

struct Counting<'a>(&'a dyn Executor, Cell<usize>);

impl Executor for Counting<'_> {
    fn run_all(&self, cfgs: &[RunConfig]) -> Vec<CoreResult<RunRecord>> {
        self.1.set(self.1.get() + cfgs.len());
        self.0.run_all(cfgs)
    }
}

fn without_wall_time(mut r: SearchResult) -> SearchResult {
    r.final_records.iter_mut().for_each(|rec| rec.wall_time_secs = None);
    r
}

fn criterion_10(ctx: &mut Context) -> Outcome {
    let spec = SearchSpec::default();
    let mut rng = RngStream::new(10);
    let n = 10_000;
    let (mut in_range, mut low, mut rho_ok) = (true, 0usize, true);
    let mut counts = [0usize; 6];
    for _ in 0..n {
        let hp = sample_hyperparams(&spec, &mut rng).unwrap();
        in_range &= (1e-4..=1.0).contains(&hp.alpha);
        rho_ok &= hp.rho == 0.9;
        low += usize::from(hp.alpha <= 1e-2);
        if let Some(k) = spec.nu_choices.iter().position(|&v| v == hp.nu) {
            counts[k] += 1;
        }
    }
    let low_frac = low as f64 / n as f64;
    let nu_ok = counts.iter().all(|&c| (c as f64 / n as f64 - 1.0 / 6.0).abs() <= 0.02);
    let sampler_ok = in_range && rho_ok && (low_frac - 0.5).abs() <= 0.03 && nu_ok;

    let problem = ProblemConfig::ToySingle { spec: ToySpec::default(), init: [0.01, 0.0001] };
    let base = RunConfig { epochs: 5, batch_size: 16, batches_per_epoch: 10, ..RunConfig::new(problem, OptimizerKind::NlSgd, HyperParams::default()) };
    let counter = Counting(&ctx.exec, Cell::new(0));
    let a = run_medium_search(&base, OptimizerKind::NlSgd, &spec, 4, &counter).unwrap();
    let runs = counter.1.get();
    let b = run_medium_search(&base, OptimizerKind::NlSgd, &spec, 4, &Sequential).unwrap();
    let deterministic = without_wall_time(a.clone()) == without_wall_time(b);

    let dir = tempfile::tempdir().unwrap();
    let mut store = RecordStore::open(dir.path()).unwrap();
    write_records(&mut store, &a.final_records).unwrap();
    let round_trip = RecordStore::open(dir.path()).unwrap().runs().unwrap() == a.final_records;

    let g1 = grid_sweep(&base, OptimizerKind::NlSgd, &[0.5, 1.0], &[0.01, 0.1], 2, &ctx.exec).unwrap();
    let g2 = grid_sweep(&base, OptimizerKind::NlSgd, &[0.5, 1.0], &[0.01, 0.1], 2, &Sequential).unwrap();
    let bytes_equal = export_grid(&g1).into_bytes() == export_grid(&g2).into_bytes();

    Outcome::new(
        sampler_ok && runs == 60 && deterministic && round_trip && bytes_equal,
        format!(
            "lr in [1e-4, 1e-2]: {low_frac:.3}; ν counts {counts:?}; runs {runs}; deterministic {deterministic}; round trip {round_trip}; grid bytes equal {bytes_equal}"
        ),
    )
}

fn main() {
    let mut ctx = Context { exec: Parallel::new(None).expect("thread pool"), nl_search: None };
    type Check = fn(&mut Context) -> Outcome;
    let criteria: [(u32, Check); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let start = Instant::now();
        let outcome = check(&mut ctx);
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2}: {verdict} [{:.1} s] {}", start.elapsed().as_secs_f64(), outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
