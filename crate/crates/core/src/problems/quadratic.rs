//! Quadratic Deep: `L = ½(θ − x)ᵀQ(θ − x)` with `x` drawn i.i.d. from a
//! zero-mean normal and a Hessian whose spectrum puts 90% of eigenvalues in
//! `(0, 1)` and 10% in `(30, 60)`.
//!
//! `Q = R·diag(λ)·Rᵀ` with `R` Haar-random. Training batches live in the
//! eigenbasis, where `x' = Rᵀx` has the same isotropic law as `x`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BatchSource, Evaluation, MetricKind, Objective, Regime, Split};
use super::reference_spectrum::REFERENCE_EIGENVALUES;
use crate::error::{Error, Result};
use crate::optim::ParamSet;
use crate::rng::RngStream;
use crate::tensor::{dot, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    dim: usize,
    hessian: Tensor,
    rotation: Tensor,
    eigenvalues: Vec<f64>,
}

/// Haar-random orthogonal matrix: Gram-Schmidt (applied twice) on the
/// columns of a Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut RngStream) -> Tensor {
    let g = Tensor::sample_gaussian(&[n, n], 0.0, 1.0, rng).expect("n > 0");
    // Work column-major: cols[j] is column j.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| g.at(i, j)).collect()).collect();
    for j in 0..n {
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj = dot(&done[k], &rest[0]);
                for (c, &b) in rest[0].iter_mut().zip(&done[k]) {
                    *c -= proj * b;
                }
            }
        }
        let norm = libm::sqrt(dot(&cols[j], &cols[j]));
        for c in cols[j].iter_mut() {
            *c /= norm;
        }
    }
    let mut data = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * n + j] = v;
        }
    }
    Tensor::matrix(n, n, data).expect("square")
}

fn open_uniform(rng: &mut RngStream, low: f64, high: f64) -> f64 {
    loop {
        let v = rng.uniform_range(low, high);
        if v > low && v < high {
            return v;
        }
    }
}

/// Random Hessian with exactly `0.9·d` eigenvalues in `(0, 1)` and `0.1·d`
/// in `(30, 60)`.
pub fn build_quadratic_deep(d: usize, rng: &mut RngStream) -> Result<QuadraticProblem> {
    if d < 10 || !d.is_multiple_of(10) {
        return Err(Error::param(alloc::format!(
            "dimension must be a positive multiple of 10, got {d}"
        )));
    }
    let n_large = d / 10;
    let mut eigenvalues: Vec<f64> = (0..d - n_large).map(|_| open_uniform(rng, 0.0, 1.0)).collect();
    eigenvalues.extend((0..n_large).map(|_| open_uniform(rng, 30.0, 60.0)));
    Ok(quadratic_with_spectrum(eigenvalues, rng))
}

/// `Q = R·diag(eigenvalues)·Rᵀ` with a Haar-random rotation `R`.
pub fn quadratic_with_spectrum(eigenvalues: Vec<f64>, rng: &mut RngStream) -> QuadraticProblem {
    let d = eigenvalues.len();
    let rotation = random_orthogonal(d, rng);

    let mut h = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let mut s = 0.0;
            for (k, l) in eigenvalues.iter().enumerate() {
                s += rotation.at(i, k) * l * rotation.at(j, k);
            }
            h[i * d + j] = s;
            h[j * d + i] = s;
        }
    }
    QuadraticProblem {
        dim: d,
        hessian: Tensor::matrix(d, d, h).expect("nonempty spectrum"),
        rotation,
        eigenvalues,
    }
}

impl QuadraticProblem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hessian(&self) -> &Tensor {
        &self.hessian
    }

    /// Orthogonal `R` with `Q = R·diag(λ)·Rᵀ`.
    pub fn rotation(&self) -> &Tensor {
        &self.rotation
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `Rᵀv`
    fn to_eigenbasis(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (i, &vi) in v.iter().enumerate() {
            let row = self.rotation.row(i);
            for (o, &r) in out.iter_mut().zip(row) {
                *o += r * vi;
            }
        }
        out
    }

    /// `Rv'`
    fn rotate_back(&self, v: &[f64]) -> Vec<f64> {
        self.rotation.matvec(v).expect("dimension checked by caller")
    }

    /// Mean loss and gradient for a batch summarized in the eigenbasis.
    fn rotated_loss_grad(&self, theta: &[f64], batch: &QuadraticBatch) -> (f64, Vec<f64>) {
        let tp = self.to_eigenbasis(theta);
        let inv_m = 1.0 / batch.size as f64;
        let mut loss = 0.0;
        let mut scaled = vec![0.0; self.dim];
        for k in 0..self.dim {
            let r = tp[k] - batch.mean[k];
            loss += self.eigenvalues[k] * (r * r + batch.scatter[k] * inv_m);
            scaled[k] = self.eigenvalues[k] * r;
        }
        (0.5 * loss, self.rotate_back(&scaled))
    }
}

/// Batch-averaged loss `½(θ−x)ᵀQ(θ−x)` and gradient `Q(θ−x)`, with the batch
/// given as `samples × d` in the original coordinates.
pub fn quadratic_loss_grad(p: &QuadraticProblem, theta: &Tensor, batch: &Tensor) -> Result<(f64, Tensor)> {
    let d = p.dim;
    if theta.len() != d {
        return Err(Error::dims("quadratic_loss_grad", &[d], theta.shape()));
    }
    if batch.shape().len() != 2 || batch.cols() != d {
        return Err(Error::dims("quadratic_loss_grad", &[d], batch.shape()));
    }
    let m = batch.rows();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    let mut r = vec![0.0; d];
    for n in 0..m {
        for (ri, (&t, &x)) in r.iter_mut().zip(theta.data().iter().zip(batch.row(n))) {
            *ri = t - x;
        }
        let qr = p.hessian.matvec(&r)?;
        loss += 0.5 * dot(&r, &qr);
        for (g, q) in grad.iter_mut().zip(&qr) {
            *g += q;
        }
    }
    let inv_m = 1.0 / m as f64;
    grad.iter_mut().for_each(|g| *g *= inv_m);
    Ok((loss * inv_m, Tensor::new(theta.shape().to_vec(), grad)?))
}

/// Where the Hessian eigenvalues come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spectrum {
    /// The fixed eigenvalues of the standard benchmark instance (`dim` = 100).
    #[default]
    Reference,
    /// Fresh draws from `instance_seed`.
    Drawn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub spectrum: Spectrum,
    /// Standard deviation of each data coordinate.
    pub noise_std: f64,
    /// Seed of the Hessian and of the held-out sets; fixed across runs.
    pub instance_seed: u64,
    pub n_valid: usize,
    pub n_test: usize,
    /// Every coordinate of θ starts here.
    pub init_value: f64,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        Self {
            dim: 100,
            spectrum: Spectrum::Reference,
            noise_std: 0.6,
            instance_seed: 42,
            n_valid: 1000,
            n_test: 1000,
            init_value: 1.0,
        }
    }
}

/// Quadratic Deep as a trainable objective with fixed validation and test
/// sets (held in the eigenbasis, like training batches).
#[derive(Clone, Debug)]
pub struct QuadraticDeep {
    spec: QuadraticSpec,
    problem: QuadraticProblem,
    valid: QuadraticBatch,
    test: QuadraticBatch,
}

/// A batch reduced to its sufficient statistics in the eigenbasis: the
/// per-coordinate sample mean and scatter `Σᵢ(xᵢ − x̄)²`. The loss and
/// gradient of the quadratic depend on the samples only through these.
#[derive(Clone, Debug)]
pub struct QuadraticBatch {
    mean: Vec<f64>,
    scatter: Vec<f64>,
    size: usize,
}

impl QuadraticBatch {
    /// Summarize `rows × d` samples given in the eigenbasis.
    pub fn from_rotated_samples(d: usize, samples: &[f64]) -> Self {
        let size = samples.len() / d;
        assert!(size > 0 && samples.len() == size * d, "batch must hold whole nonempty rows");
        let mut mean = vec![0.0; d];
        for x in samples.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= size as f64);
        let mut scatter = vec![0.0; d];
        for x in samples.chunks_exact(d) {
            for k in 0..d {
                let r = x[k] - mean[k];
                scatter[k] += r * r;
            }
        }
        Self { mean, scatter, size }
    }

    /// Draw the statistics of `size` samples from `N(0, σ²I)` directly: the
    /// mean is `N(0, σ²/size)` and the scatter `σ²·χ²(size − 1)`, independently
    /// per coordinate.
    pub fn sample(d: usize, size: usize, std: f64, rng: &mut RngStream) -> Self {
        assert!(size > 0, "batch size must be positive");
        let mean_std = std / libm::sqrt(size as f64);
        let mut mean = vec![0.0; d];
        rng.fill_normal(&mut mean, 0.0, mean_std);
        let scatter = (0..d).map(|_| std * std * rng.chi_square(size - 1)).collect();
        Self { mean, scatter, size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scatter(&self) -> &[f64] {
        &self.scatter
    }
}

impl QuadraticDeep {
    pub fn new(spec: QuadraticSpec) -> Result<Self> {
        if !(spec.noise_std >= 0.0) {
            return Err(Error::param("noise_std must be >= 0"));
        }
        if spec.n_valid == 0 || spec.n_test == 0 {
            return Err(Error::param("held-out sets must be nonempty"));
        }
        let mut rng = RngStream::new(spec.instance_seed);
        let problem = match spec.spectrum {
            Spectrum::Drawn => build_quadratic_deep(spec.dim, &mut rng)?,
            Spectrum::Reference if spec.dim == REFERENCE_EIGENVALUES.len() => {
                quadratic_with_spectrum(REFERENCE_EIGENVALUES.to_vec(), &mut rng)
            }
            Spectrum::Reference => {
                return Err(Error::param(alloc::format!(
                    "the reference spectrum has dimension {}, got {}",
                    REFERENCE_EIGENVALUES.len(),
                    spec.dim
                )))
            }
        };
        let draw = |n: usize, rng: &mut RngStream| {
            let mut v = vec![0.0; n * spec.dim];
            rng.fill_normal(&mut v, 0.0, spec.noise_std);
            QuadraticBatch::from_rotated_samples(spec.dim, &v)
        };
        let mut held_out = rng.child(1);
        let valid = draw(spec.n_valid, &mut held_out);
        let test = draw(spec.n_test, &mut held_out);
        Ok(Self { spec, problem, valid, test })
    }

    pub fn spec(&self) -> &QuadraticSpec {
        &self.spec
    }

    pub fn problem(&self) -> &QuadraticProblem {
        &self.problem
    }

    /// Expected loss under the data distribution: `½θᵀQθ + ½σ²·tr(Q)`.
    pub fn expected_loss(&self, theta: &[f64]) -> f64 {
        let tp = self.problem.to_eigenbasis(theta);
        let quad: f64 = tp.iter().zip(&self.problem.eigenvalues).map(|(t, l)| l * t * t).sum();
        0.5 * quad + 0.5 * self.spec.noise_std * self.spec.noise_std * self.problem.trace()
    }
}

impl Objective for QuadraticDeep {
    type Batch = QuadraticBatch;

    fn name(&self) -> String {
        "quadratic_deep".into()
    }

    fn regime(&self) -> Regime {
        Regime::Online
    }

    fn metric(&self) -> MetricKind {
        MetricKind::Loss
    }

    fn init_params(&self, _rng: &mut RngStream) -> ParamSet {
        ParamSet::single(Tensor::filled(&[self.spec.dim], self.spec.init_value))
    }

    fn draw_batch(&self, source: BatchSource<'_>) -> QuadraticBatch {
        match source {
            BatchSource::Fresh { size, rng } => {
                QuadraticBatch::sample(self.spec.dim, size, self.spec.noise_std, rng)
            }
            BatchSource::Indices(_) => panic!("quadratic_deep draws fresh batches"),
        }
    }

    fn loss_grad(&self, params: &ParamSet, batch: &QuadraticBatch) -> Result<(f64, ParamSet)> {
        let theta = &params.layers()[0].kernel;
        if theta.len() != self.spec.dim {
            return Err(Error::dims("quadratic_deep", &[self.spec.dim], theta.shape()));
        }
        let (loss, grad) = self.problem.rotated_loss_grad(theta.data(), batch);
        Ok((loss, ParamSet::single(Tensor::new(theta.shape().to_vec(), grad)?)))
    }

    fn evaluate(&self, params: &ParamSet, split: Split) -> Result<Evaluation> {
        let theta = &params.layers()[0].kernel;
        let held_out = match split {
            Split::Validation => &self.valid,
            Split::Test => &self.test,
        };
        let (loss, _) = self.problem.rotated_loss_grad(theta.data(), held_out);
        Ok(Evaluation { loss, accuracy: None })
    }
}
