use nlgrad_core::optim::ParamSet;
use nlgrad_core::problems::mlp::loss_grad as mlp_loss_grad;
use nlgrad_core::problems::toy::sample_inputs;
use nlgrad_core::problems::{
    toy_single_grad, BatchSource, MlpClassifier, Objective, QuadraticDeep, QuadraticSpec, ToySingleNode,
    ToyThreeNode,
};
use nlgrad_core::{RngStream, Tensor};

const H: f64 = 1e-6;

/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` with central differences.
fn relative_error(params: &ParamSet, analytic: &[f64], loss: impl Fn(&ParamSet) -> f64) -> f64 {
    let x0 = params.flatten();
    let mut p = params.clone();
    let mut numeric = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        let mut x = x0.clone();
        x[i] = x0[i] + H;
        p.assign_flat(&x).unwrap();
        let up = loss(&p);
        x[i] = x0[i] - H;
        p.assign_flat(&x).unwrap();
        let down = loss(&p);
        numeric[i] = (up - down) / (2.0 * H);
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(&numeric)).max(1e-300)
}

#[test]
fn quadratic_deep() {
    let problem = QuadraticDeep::new(QuadraticSpec::default()).unwrap();
    let mut rng = RngStream::new(3);
    let batch = problem.draw_batch(BatchSource::Fresh { size: 16, rng: &mut rng });
    let mut params = problem.init_params(&mut rng);
    let mut x = params.flatten();
    rng.fill_normal(&mut x, 0.0, 1.0);
    params.assign_flat(&x).unwrap();
    let (_, g) = problem.loss_grad(&params, &batch).unwrap();
    let err = relative_error(&params, &g.flatten(), |p| problem.loss_grad(p, &batch).unwrap().0);
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn toy_single() {
    let mut rng = RngStream::new(5);
    let batch = sample_inputs(1.0, 0.3, 64, &mut rng);
    let node = ToySingleNode { v1: 0.3, v2: -0.2, a: 1.0, sigma: 0.3 };
    let params = ParamSet::single(Tensor::vector(vec![node.v1, node.v2]));
    let g = toy_single_grad(&node, &batch).unwrap().1;
    let err = relative_error(&params, &g, |p| {
        let v = p.flatten();
        toy_single_grad(&ToySingleNode { v1: v[0], v2: v[1], ..node }, &batch).unwrap().0
    });
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn toy_three() {
    let mut rng = RngStream::new(6);
    let batch = sample_inputs(1.0, 0.3, 64, &mut rng);
    let node = ToyThreeNode { w11: 0.4, w12: -0.7, w21: 0.2, w22: 1.1, a: 1.0, sigma: 0.3 };
    let params = node.to_params();
    let g = node.loss_grad(&batch).unwrap().1;
    // Flattened layout is [w11, w21, w12, w22].
    let analytic = [g[0], g[2], g[1], g[3]];
    let err = relative_error(&params, &analytic, |p| node.with_params(p).loss_grad(&batch).unwrap().0);
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn mlp() {
    let mut rng = RngStream::new(7);
    for sizes in [vec![6, 3], vec![6, 5, 3], vec![4, 8, 5, 2]] {
        let model = MlpClassifier::init(&sizes, &mut rng).unwrap();
        let inputs = Tensor::sample_gaussian(&[12, sizes[0]], 0.0, 1.0, &mut rng).unwrap();
        let labels: Vec<usize> = (0..12).map(|_| rng.below(*sizes.last().unwrap())).collect();
        let (_, g) = mlp_loss_grad(&model.params, &inputs, &labels).unwrap();
        let err = relative_error(&model.params, &g.flatten(), |p| mlp_loss_grad(p, &inputs, &labels).unwrap().0);
        assert!(err < 1e-5, "sizes {sizes:?}: relative error {err:e}");
    }
}
