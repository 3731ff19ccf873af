//! Fully connected rectifier network with a softmax cross-entropy head and
//! hand-written backpropagation. Kernels are `fan_in × fan_out`, so a layer
//! computes `z = a·W + b`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::data::{gen_correlated_dataset, ClassificationData, CorrelatedSpec};
use super::{BatchSource, Evaluation, MetricKind, Objective, Regime, Split};
use crate::error::{Error, Result};
use crate::optim::{Layer, ParamSet};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpClassifier {
    sizes: Vec<usize>,
    pub params: ParamSet,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() < 2 {
        return Err(Error::param(alloc::format!(
            "layer sizes need an input, an output of >= 2 classes and no empty layer, got {sizes:?}"
        )));
    }
    Ok(())
}

impl MlpClassifier {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                kernel: Tensor::zeros(&[w[0], w[1]]),
                bias: Some(Tensor::zeros(&[w[1]])),
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), params: ParamSet::new(layers) })
    }

    /// Glorot-uniform kernels, zero biases.
    pub fn init(sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        let mut m = Self::zeros(sizes)?;
        for l in m.params.layers_mut() {
            let (fan_in, fan_out) = (l.kernel.shape()[0], l.kernel.shape()[1]);
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for w in l.kernel.data_mut() {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn probabilities(&self, inputs: &Tensor) -> Result<Tensor> {
        let pass = forward(&self.params, inputs)?;
        let k = self.n_classes();
        let mut probs = pass.logits;
        for row in probs.chunks_exact_mut(k) {
            softmax_in_place(row);
        }
        Tensor::matrix(inputs.rows(), k, probs)
    }

    /// Post-rectifier outputs of each hidden layer (`samples × units`).
    pub fn hidden_activations(&self, inputs: &Tensor) -> Result<Vec<Tensor>> {
        let pass = forward(&self.params, inputs)?;
        let n = inputs.rows();
        pass.activations[1..]
            .iter()
            .zip(&self.sizes[1..self.sizes.len() - 1])
            .map(|(a, &u)| Tensor::matrix(n, u, a.clone()))
            .collect()
    }
}

struct Forward {
    /// Layer inputs: `activations[0]` is the batch itself.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

fn affine(input: &[f64], rows: usize, kernel: &Tensor, bias: Option<&Tensor>) -> Vec<f64> {
    let (fan_in, fan_out) = (kernel.shape()[0], kernel.shape()[1]);
    let w = kernel.data();
    let mut out = vec![0.0; rows * fan_out];
    for (x, z) in input.chunks_exact(fan_in).zip(out.chunks_exact_mut(fan_out)) {
        if let Some(b) = bias {
            z.copy_from_slice(b.data());
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (zj, &wij) in z.iter_mut().zip(&w[i * fan_out..(i + 1) * fan_out]) {
                *zj += xi * wij;
            }
        }
    }
    out
}

fn forward(params: &ParamSet, inputs: &Tensor) -> Result<Forward> {
    let layers = params.layers();
    let first = &layers[0].kernel;
    if inputs.shape().len() != 2 || inputs.cols() != first.shape()[0] {
        return Err(Error::dims("mlp forward", inputs.shape(), first.shape()));
    }
    let rows = inputs.rows();
    let mut activations = vec![inputs.data().to_vec()];
    let mut pre = Vec::with_capacity(layers.len() - 1);
    for (li, l) in layers.iter().enumerate() {
        let z = affine(activations.last().unwrap(), rows, &l.kernel, l.bias.as_ref());
        if li + 1 == layers.len() {
            return Ok(Forward { activations, pre, logits: z });
        }
        activations.push(z.iter().map(|&v| v.max(0.0)).collect());
        pre.push(z);
    }
    unreachable!("at least one layer")
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Mean softmax cross-entropy and its exact gradient.
pub fn loss_grad(params: &ParamSet, inputs: &Tensor, labels: &[usize]) -> Result<(f64, ParamSet)> {
    if inputs.rows() != labels.len() || labels.is_empty() {
        return Err(Error::dims("mlp batch", inputs.shape(), &[labels.len()]));
    }
    let pass = forward(params, inputs)?;
    let layers = params.layers();
    let k = layers.last().unwrap().kernel.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::param(alloc::format!("label {bad} out of range for {k} classes")));
    }
    let m = labels.len();
    let inv_m = 1.0 / m as f64;

    let mut loss = 0.0;
    let mut delta = pass.logits;
    for (row, &y) in delta.chunks_exact_mut(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = libm::exp(*v - lse) * inv_m;
        }
        row[y] -= inv_m;
    }

    let mut grads = params.zeros_like();
    for li in (0..layers.len()).rev() {
        let (fan_in, fan_out) = (layers[li].kernel.shape()[0], layers[li].kernel.shape()[1]);
        let input = &pass.activations[li];
        let gl = &mut grads.layers_mut()[li];
        let gw = gl.kernel.data_mut();
        for (x, d) in input.chunks_exact(fan_in).zip(delta.chunks_exact(fan_out)) {
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (g, &dj) in gw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(d) {
                    *g += xi * dj;
                }
            }
        }
        if let Some(gb) = gl.bias.as_mut() {
            for d in delta.chunks_exact(fan_out) {
                for (g, &dj) in gb.data_mut().iter_mut().zip(d) {
                    *g += dj;
                }
            }
        }
        if li == 0 {
            break;
        }
        let w = layers[li].kernel.data();
        let z_prev = &pass.pre[li - 1];
        let mut next = vec![0.0; m * fan_in];
        for ((d, out), z) in delta
            .chunks_exact(fan_out)
            .zip(next.chunks_exact_mut(fan_in))
            .zip(z_prev.chunks_exact(fan_in))
        {
            for i in 0..fan_in {
                if z[i] > 0.0 {
                    out[i] = crate::tensor::dot(&w[i * fan_out..(i + 1) * fan_out], d);
                }
            }
        }
        delta = next;
    }
    Ok((loss * inv_m, grads))
}

/// Loss and gradient of `model` on a labelled batch.
pub fn mlp_loss_grad(model: &MlpClassifier, batch: &ClassificationData) -> Result<(f64, ParamSet)> {
    loss_grad(&model.params, &batch.inputs, &batch.labels)
}

fn evaluate_on(params: &ParamSet, data: &ClassificationData) -> Result<Evaluation> {
    let pass = forward(params, &data.inputs)?;
    let k = data.n_classes;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &y) in pass.logits.chunks_exact(k).zip(&data.labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
        loss += lse - row[y];
        // First maximal logit wins ties.
        let pred = row
            .iter()
            .enumerate()
            .fold(0, |best, (j, &z)| if z > row[best] { j } else { best });
        correct += usize::from(pred == y);
    }
    let n = data.len() as f64;
    Ok(Evaluation { loss: loss / n, accuracy: Some(correct as f64 / n) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelatedMlpSpec {
    pub data: CorrelatedSpec,
    pub hidden: Vec<usize>,
    /// Seed of the dataset and of the validation split; fixed across runs.
    pub instance_seed: u64,
    pub n_test: usize,
    pub valid_fraction: f64,
}

impl Default for CorrelatedMlpSpec {
    fn default() -> Self {
        Self {
            data: CorrelatedSpec::default(),
            hidden: vec![16],
            instance_seed: 1234,
            n_test: 1000,
            valid_fraction: 0.1,
        }
    }
}

/// MLP classification with a fixed train/validation/test partition.
#[derive(Clone, Debug)]
pub struct MlpProblem {
    name: String,
    sizes: Vec<usize>,
    train: ClassificationData,
    valid: ClassificationData,
    test: ClassificationData,
}

impl MlpProblem {
    /// Holds out `valid_fraction` of `train` (seeded) for validation.
    pub fn new(
        name: impl Into<String>,
        hidden: &[usize],
        train: ClassificationData,
        test: ClassificationData,
        valid_fraction: f64,
        split_seed: u64,
    ) -> Result<Self> {
        if train.features() != test.features() || train.n_classes != test.n_classes {
            return Err(Error::dims("MlpProblem", train.inputs.shape(), test.inputs.shape()));
        }
        if !(0.0..1.0).contains(&valid_fraction) {
            return Err(Error::param("valid_fraction must lie in [0, 1)"));
        }
        let mut sizes = vec![train.features()];
        sizes.extend_from_slice(hidden);
        sizes.push(train.n_classes);
        check_sizes(&sizes)?;
        let (tr, va) = train.holdout_split(valid_fraction, split_seed);
        if tr.is_empty() || va.is_empty() {
            return Err(Error::InsufficientData { needed: 2, got: train.len() });
        }
        Ok(Self {
            name: name.into(),
            sizes,
            valid: train.subset(&va),
            train: train.subset(&tr),
            test,
        })
    }

    pub fn correlated(spec: &CorrelatedMlpSpec) -> Result<Self> {
        let mut rng = RngStream::new(spec.instance_seed);
        let train = gen_correlated_dataset(&spec.data, &mut rng)?.to_classification();
        let test_spec = CorrelatedSpec { n_samples: spec.n_test, ..spec.data.clone() };
        let test = gen_correlated_dataset(&test_spec, &mut rng.child(1))?.to_classification();
        Self::new("correlated_mlp", &spec.hidden, train, test, spec.valid_fraction, spec.instance_seed ^ 0x5eed)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn train_data(&self) -> &ClassificationData {
        &self.train
    }
}

impl Objective for MlpProblem {
    type Batch = ClassificationData;

    fn name(&self) -> String {
        self.name.clone()
    }

    fn regime(&self) -> Regime {
        Regime::Finite { n_train: self.train.len() }
    }

    fn metric(&self) -> MetricKind {
        MetricKind::Accuracy
    }

    fn init_params(&self, rng: &mut RngStream) -> ParamSet {
        MlpClassifier::init(&self.sizes, rng).expect("sizes validated").params
    }

    fn draw_batch(&self, source: BatchSource<'_>) -> ClassificationData {
        match source {
            BatchSource::Indices(idx) => self.train.subset(idx),
            BatchSource::Fresh { size, rng } => {
                let idx: Vec<usize> = (0..size).map(|_| rng.below(self.train.len())).collect();
                self.train.subset(&idx)
            }
        }
    }

    fn loss_grad(&self, params: &ParamSet, batch: &ClassificationData) -> Result<(f64, ParamSet)> {
        loss_grad(params, &batch.inputs, &batch.labels)
    }

    fn evaluate(&self, params: &ParamSet, split: Split) -> Result<Evaluation> {
        match split {
            Split::Validation => evaluate_on(params, &self.valid),
            Split::Test => evaluate_on(params, &self.test),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpClassifier::zeros(&[3, 4, 2]).unwrap();
        let x = Tensor::zeros(&[5, 3]);
        let p = m.probabilities(&x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let data = ClassificationData::new(x, vec![0, 1, 1, 0, 1], 2).unwrap();
        let (loss, _) = mlp_loss_grad(&m, &data).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn duplicated_sample_keeps_mean() {
        let m = MlpClassifier::init(&[3, 5, 3], &mut RngStream::new(1)).unwrap();
        let x = Tensor::sample_gaussian(&[2, 3], 0.0, 1.0, &mut RngStream::new(2)).unwrap();
        let single = ClassificationData::new(
            Tensor::matrix(1, 3, x.row(0).to_vec()).unwrap(),
            vec![2],
            3,
        )
        .unwrap();
        let twice = ClassificationData::new(
            Tensor::from_rows(&[x.row(0), x.row(0)]).unwrap(),
            vec![2, 2],
            3,
        )
        .unwrap();
        let (l1, g1) = mlp_loss_grad(&m, &single).unwrap();
        let (l2, g2) = mlp_loss_grad(&m, &twice).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        assert!(g1.max_abs_diff(&g2).unwrap() < 1e-14);
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = MlpClassifier::zeros(&[3, 2]).unwrap();
        let data = ClassificationData::new(Tensor::zeros(&[2, 4]), vec![0, 1], 2).unwrap();
        assert!(matches!(mlp_loss_grad(&m, &data), Err(Error::Dimension { .. })));
        assert!(MlpClassifier::zeros(&[3, 1]).is_err());
    }

    #[test]
    fn hidden_activations_shape() {
        let m = MlpClassifier::init(&[4, 6, 3, 2], &mut RngStream::new(3)).unwrap();
        let x = Tensor::sample_gaussian(&[7, 4], 0.0, 1.0, &mut RngStream::new(4)).unwrap();
        let h = m.hidden_activations(&x).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].shape(), &[7, 6]);
        assert_eq!(h[1].shape(), &[7, 3]);
        assert!(h.iter().all(|t| t.data().iter().all(|&v| v >= 0.0)));
    }
}
