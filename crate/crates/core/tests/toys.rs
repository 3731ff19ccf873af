use nlgrad_core::optim::{HyperParams, OptimizerKind};
use nlgrad_core::problems::toy::{expected_single_loss, sample_inputs};
use nlgrad_core::problems::{toy_three_product_step, ToySpec, ToyThreeNode};
use nlgrad_core::train::{run_training, ProblemConfig, RunConfig};
use nlgrad_core::RngStream;

#[test]
fn product_update_closed_form_matches_backprop() {
    let mut rng = RngStream::new(17);
    for _ in 0..200 {
        let m = ToyThreeNode {
            w11: rng.uniform_range(-1.0, 1.0),
            w12: rng.uniform_range(-1.0, 1.0),
            w21: rng.uniform_range(-1.0, 1.0),
            w22: rng.uniform_range(-1.0, 1.0),
            a: 1.0,
            sigma: 0.2,
        };
        let batch = sample_inputs(1.0, 0.2, 1 + rng.below(32), &mut rng);
        let lr = rng.uniform_range(1e-4, 0.1);
        let step = toy_three_product_step(&m, &batch, lr).unwrap();
        for i in 0..2 {
            assert!((step.closed_form[i] - step.backprop[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn quoted_product_formula_differs_from_backprop() {
    let m = ToyThreeNode::balanced(0.1, 0.5, 1.0, 0.1).unwrap();
    let batch = sample_inputs(1.0, 0.1, 8, &mut RngStream::new(1));
    let step = toy_three_product_step(&m, &batch, 0.01).unwrap();
    assert!((step.quoted_formula[0] - step.backprop[0]).abs() > 1e-3);
}

#[test]
fn expected_loss_minimizer_has_equal_weights() {
    let (a, sigma) = (1.0, 0.1);
    let (mut best, mut at) = (f64::INFINITY, (0.0, 0.0));
    for i in 0..=1000 {
        for j in 0..=1000 {
            let (v1, v2) = (i as f64 * 1e-3, j as f64 * 1e-3);
            let l = expected_single_loss(v1, v2, a, sigma);
            if l < best {
                best = l;
                at = (v1, v2);
            }
        }
    }
    assert!((at.0 - at.1).abs() <= 1e-3 + 1e-12);
    let v = a * a / (2.0 * a * a + sigma * sigma);
    assert!((at.0 - v).abs() <= 1e-3 && (at.1 - v).abs() <= 1e-3);
}

#[test]
fn expected_loss_gradient_descent_contracts_the_gap_slowly() {
    let (a, sigma, lr) = (1.0f64, 0.1f64, 0.01f64);
    let (mut v1, mut v2) = (0.01, 0.0001);
    for t in 1..=500 {
        let bias = 2.0 * a * a * (v1 + v2 - 1.0);
        let (g1, g2) = (bias + 2.0 * sigma * sigma * v1, bias + 2.0 * sigma * sigma * v2);
        v1 -= lr * g1;
        v2 -= lr * g2;
        let gap = 0.0099 * (1.0 - 2.0 * lr * sigma * sigma).powi(t);
        assert!(((v1 - v2) - gap).abs() < 1e-12);
    }
}

fn product_gap_at_milestone(kind: OptimizerKind, nu: f64, seed: u64) -> Option<f64> {
    let problem = ProblemConfig::ToyThree { spec: ToySpec::default(), w: 0.1, kappa: 0.5 };
    let cfg = RunConfig {
        epochs: 3000,
        batch_size: 32,
        batches_per_epoch: 1,
        seed,
        ..RunConfig::new(problem, kind, HyperParams::nl(0.01, nu))
    };
    let record = run_training(&cfg).unwrap();
    record
        .products
        .unwrap()
        .into_iter()
        .find(|p| (p[0] + p[1] - 1.0).abs() < 0.05)
        .map(|p| (p[0] - p[1]).abs())
}

#[test]
fn unbalanced_split_drives_products_apart() {
    for seed in 0..3 {
        let gd = product_gap_at_milestone(OptimizerKind::Sgd, 1.0, seed).unwrap();
        let nl = product_gap_at_milestone(OptimizerKind::NlSgd, 0.5, seed).unwrap();
        assert!(gd > 0.0, "balanced init has equal products; GD must separate them");
        assert!(nl < gd, "seed {seed}: NL gap {nl} vs GD gap {gd}");
    }
}
