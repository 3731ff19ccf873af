//! Two-input toy models with a constant target `a`.
//!
//! Both inputs are `N(a, σ²)` draws. The single-node model outputs
//! `v₁x₁ + v₂x₂`; the three-node model routes each input through its own
//! linear hidden unit, so its output is `w₁₁w₁₂x₁ + w₂₁w₂₂x₂`. The two are
//! the same function when `vᵢ = wᵢ₁wᵢ₂`, but gradient descent moves a product
//! `wᵢ₁wᵢ₂` at a rate proportional to `wᵢ₁² + wᵢ₂²`, so paths with the same
//! product but different weight splits drift apart.

use alloc::string::String;
use alloc::vec;

use serde::{Deserialize, Serialize};

use super::{BatchSource, Evaluation, MetricKind, Objective, Regime, Split};
use crate::error::{Error, Result};
use crate::optim::{Layer, ParamSet};
use crate::rng::RngStream;
use crate::tensor::Tensor;

fn check_batch(batch: &Tensor) -> Result<()> {
    if batch.shape().len() != 2 || batch.cols() != 2 {
        return Err(Error::dims("toy batch", &[0, 2], batch.shape()));
    }
    Ok(())
}

/// `rows × 2` inputs drawn from `N(a, σ²)`.
pub fn sample_inputs(a: f64, sigma: f64, rows: usize, rng: &mut RngStream) -> Tensor {
    Tensor::sample_gaussian(&[rows, 2], a, sigma, rng).expect("sigma checked at construction")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySingleNode {
    pub v1: f64,
    pub v2: f64,
    pub a: f64,
    pub sigma: f64,
}

impl ToySingleNode {
    pub fn output(&self, x1: f64, x2: f64) -> f64 {
        self.v1 * x1 + self.v2 * x2
    }

    /// `E[(v₁x₁ + v₂x₂ − a)²] = a²(v₁+v₂−1)² + σ²(v₁²+v₂²)`.
    pub fn expected_loss(&self) -> f64 {
        expected_single_loss(self.v1, self.v2, self.a, self.sigma)
    }
}

pub fn expected_single_loss(v1: f64, v2: f64, a: f64, sigma: f64) -> f64 {
    let bias = v1 + v2 - 1.0;
    a * a * bias * bias + sigma * sigma * (v1 * v1 + v2 * v2)
}

/// Mean of `(v₁x₁ + v₂x₂ − a)²` over the batch and its gradient in `(v₁, v₂)`.
pub fn toy_single_grad(m: &ToySingleNode, batch: &Tensor) -> Result<(f64, [f64; 2])> {
    check_batch(batch)?;
    let n = batch.rows() as f64;
    let mut loss = 0.0;
    let mut g = [0.0; 2];
    for x in batch.data().chunks_exact(2) {
        let e = m.output(x[0], x[1]) - m.a;
        loss += e * e;
        g[0] += 2.0 * e * x[0];
        g[1] += 2.0 * e * x[1];
    }
    Ok((loss / n, [g[0] / n, g[1] / n]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyThreeNode {
    pub w11: f64,
    pub w12: f64,
    pub w21: f64,
    pub w22: f64,
    pub a: f64,
    pub sigma: f64,
}

impl ToyThreeNode {
    /// Equal path products `w²` split as `w₁₁ = w₁₂ = w`, `w₂₁ = κw`,
    /// `w₂₂ = w/κ`.
    pub fn balanced(w: f64, kappa: f64, a: f64, sigma: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::param(alloc::format!("kappa must be > 0, got {kappa}")));
        }
        Ok(Self {
            w11: w,
            w12: w,
            w21: kappa * w,
            w22: w / kappa,
            a,
            sigma,
        })
    }

    pub fn products(&self) -> [f64; 2] {
        [self.w11 * self.w12, self.w21 * self.w22]
    }

    pub fn output(&self, x1: f64, x2: f64) -> f64 {
        // Hidden units are linear: h_i = w_i1·x_i, y = Σ w_i2·h_i.
        self.w12 * (self.w11 * x1) + self.w22 * (self.w21 * x2)
    }

    /// The single-node model with `vᵢ = wᵢ₁wᵢ₂`.
    pub fn as_single(&self) -> ToySingleNode {
        let [v1, v2] = self.products();
        ToySingleNode { v1, v2, a: self.a, sigma: self.sigma }
    }

    pub fn to_params(&self) -> ParamSet {
        ParamSet::new(vec![
            Layer { kernel: Tensor::vector(vec![self.w11, self.w21]), bias: None },
            Layer { kernel: Tensor::vector(vec![self.w12, self.w22]), bias: None },
        ])
    }

    pub fn with_params(&self, p: &ParamSet) -> Self {
        let l = p.layers();
        let (first, second) = (l[0].kernel.data(), l[1].kernel.data());
        Self {
            w11: first[0],
            w21: first[1],
            w12: second[0],
            w22: second[1],
            ..*self
        }
    }

    /// Mean squared error and gradients `[∂w₁₁, ∂w₁₂, ∂w₂₁, ∂w₂₂]`.
    pub fn loss_grad(&self, batch: &Tensor) -> Result<(f64, [f64; 4])> {
        check_batch(batch)?;
        let n = batch.rows() as f64;
        let mut loss = 0.0;
        let mut s = [0.0; 2];
        for x in batch.data().chunks_exact(2) {
            let e = self.output(x[0], x[1]) - self.a;
            loss += e * e;
            s[0] += e * x[0];
            s[1] += e * x[1];
        }
        let (s1, s2) = (2.0 * s[0] / n, 2.0 * s[1] / n);
        Ok((
            loss / n,
            [s1 * self.w12, s1 * self.w11, s2 * self.w22, s2 * self.w21],
        ))
    }
}

/// Path products after one gradient step on `L = Σₙ (y⁽ⁿ⁾ − a)²`, computed
/// three ways.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductStep {
    /// `Sⱼ = Σₙ xⱼ⁽ⁿ⁾(y⁽ⁿ⁾ − a)`
    pub s: [f64; 2],
    /// Exact recurrence `p(1 + 4η²S²) − 2ηS(wᵢ₁² + wᵢ₂²)`.
    pub closed_form: [f64; 2],
    /// Products of the four weights after a literal backprop step.
    pub backprop: [f64; 2],
    /// The recurrence as commonly quoted, `p(1+2S)² − S(wᵢ₁² + wᵢ₂²)`, which
    /// carries no step size and matches backprop only when `S = 0`.
    pub quoted_formula: [f64; 2],
}

pub fn toy_three_product_step(m: &ToyThreeNode, batch: &Tensor, lr: f64) -> Result<ProductStep> {
    check_batch(batch)?;
    let mut s = [0.0; 2];
    for x in batch.data().chunks_exact(2) {
        let e = m.output(x[0], x[1]) - m.a;
        s[0] += x[0] * e;
        s[1] += x[1] * e;
    }
    let pairs = [(m.w11, m.w12), (m.w21, m.w22)];
    let mut closed_form = [0.0; 2];
    let mut backprop = [0.0; 2];
    let mut quoted_formula = [0.0; 2];
    for i in 0..2 {
        let (u, w) = pairs[i];
        let si = s[i];
        let p = u * w;
        let sq = u * u + w * w;
        closed_form[i] = p * (1.0 + 4.0 * lr * lr * si * si) - 2.0 * lr * si * sq;
        // ∂L/∂u = 2·S·w, ∂L/∂w = 2·S·u
        backprop[i] = (u - lr * 2.0 * si * w) * (w - lr * 2.0 * si * u);
        quoted_formula[i] = p * (1.0 + 2.0 * si) * (1.0 + 2.0 * si) - si * sq;
    }
    Ok(ProductStep { s, closed_form, backprop, quoted_formula })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub a: f64,
    pub sigma: f64,
    /// Seed of the fixed evaluation sets.
    pub instance_seed: u64,
    pub n_eval: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self { a: 1.0, sigma: 0.1, instance_seed: 7, n_eval: 1000 }
    }
}

fn eval_sets(spec: &ToySpec) -> Result<(Tensor, Tensor)> {
    if !(spec.sigma >= 0.0) || spec.n_eval == 0 {
        return Err(Error::param("toy spec needs sigma >= 0 and n_eval > 0"));
    }
    let mut rng = RngStream::new(spec.instance_seed);
    Ok((
        sample_inputs(spec.a, spec.sigma, spec.n_eval, &mut rng),
        sample_inputs(spec.a, spec.sigma, spec.n_eval, &mut rng),
    ))
}

/// Single-node toy as a trainable objective, parameters `[v₁, v₂]`.
#[derive(Clone, Debug)]
pub struct ToySingleProblem {
    pub spec: ToySpec,
    pub init: [f64; 2],
    valid: Tensor,
    test: Tensor,
}

impl ToySingleProblem {
    pub fn new(spec: ToySpec, init: [f64; 2]) -> Result<Self> {
        let (valid, test) = eval_sets(&spec)?;
        Ok(Self { spec, init, valid, test })
    }

    pub fn node(&self, p: &ParamSet) -> ToySingleNode {
        let v = p.layers()[0].kernel.data();
        ToySingleNode { v1: v[0], v2: v[1], a: self.spec.a, sigma: self.spec.sigma }
    }
}

impl Objective for ToySingleProblem {
    type Batch = Tensor;

    fn name(&self) -> String {
        "toy_single".into()
    }

    fn regime(&self) -> Regime {
        Regime::Online
    }

    fn metric(&self) -> MetricKind {
        MetricKind::Loss
    }

    fn init_params(&self, _rng: &mut RngStream) -> ParamSet {
        ParamSet::single(Tensor::vector(self.init.to_vec()))
    }

    fn draw_batch(&self, source: BatchSource<'_>) -> Tensor {
        match source {
            BatchSource::Fresh { size, rng } => sample_inputs(self.spec.a, self.spec.sigma, size, rng),
            BatchSource::Indices(_) => panic!("toy problems draw fresh batches"),
        }
    }

    fn loss_grad(&self, params: &ParamSet, batch: &Tensor) -> Result<(f64, ParamSet)> {
        let (loss, g) = toy_single_grad(&self.node(params), batch)?;
        Ok((loss, ParamSet::single(Tensor::vector(g.to_vec()))))
    }

    fn evaluate(&self, params: &ParamSet, split: Split) -> Result<Evaluation> {
        let set = if split == Split::Validation { &self.valid } else { &self.test };
        let (loss, _) = toy_single_grad(&self.node(params), set)?;
        Ok(Evaluation { loss, accuracy: None })
    }
}

/// Three-node toy as a trainable objective: layer 0 holds `[w₁₁, w₂₁]`,
/// layer 1 holds `[w₁₂, w₂₂]`.
#[derive(Clone, Debug)]
pub struct ToyThreeProblem {
    pub spec: ToySpec,
    pub init: ToyThreeNode,
    valid: Tensor,
    test: Tensor,
}

impl ToyThreeProblem {
    pub fn new(spec: ToySpec, w: f64, kappa: f64) -> Result<Self> {
        let init = ToyThreeNode::balanced(w, kappa, spec.a, spec.sigma)?;
        Self::from_node(spec, init)
    }

    pub fn from_node(spec: ToySpec, init: ToyThreeNode) -> Result<Self> {
        let (valid, test) = eval_sets(&spec)?;
        let init = ToyThreeNode { a: spec.a, sigma: spec.sigma, ..init };
        Ok(Self { spec, init, valid, test })
    }

    pub fn node(&self, p: &ParamSet) -> ToyThreeNode {
        self.init.with_params(p)
    }
}

impl Objective for ToyThreeProblem {
    type Batch = Tensor;

    fn name(&self) -> String {
        "toy_three".into()
    }

    fn regime(&self) -> Regime {
        Regime::Online
    }

    fn metric(&self) -> MetricKind {
        MetricKind::Loss
    }

    fn init_params(&self, _rng: &mut RngStream) -> ParamSet {
        self.init.to_params()
    }

    fn draw_batch(&self, source: BatchSource<'_>) -> Tensor {
        match source {
            BatchSource::Fresh { size, rng } => sample_inputs(self.spec.a, self.spec.sigma, size, rng),
            BatchSource::Indices(_) => panic!("toy problems draw fresh batches"),
        }
    }

    fn loss_grad(&self, params: &ParamSet, batch: &Tensor) -> Result<(f64, ParamSet)> {
        let (loss, g) = self.node(params).loss_grad(batch)?;
        Ok((
            loss,
            ParamSet::new(vec![
                Layer { kernel: Tensor::vector(vec![g[0], g[2]]), bias: None },
                Layer { kernel: Tensor::vector(vec![g[1], g[3]]), bias: None },
            ]),
        ))
    }

    fn evaluate(&self, params: &ParamSet, split: Split) -> Result<Evaluation> {
        let set = if split == Split::Validation { &self.valid } else { &self.test };
        let (loss, _) = self.node(params).loss_grad(set)?;
        Ok(Evaluation { loss, accuracy: None })
    }
}
