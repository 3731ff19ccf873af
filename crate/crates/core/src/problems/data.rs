//! Synthetic correlated-input data and in-memory classification sets.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Labelled samples, `inputs` is `n × features`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationData {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl ClassificationData {
    pub fn new(inputs: Tensor, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
            return Err(Error::dims("ClassificationData", inputs.shape(), &[labels.len()]));
        }
        if n_classes < 2 {
            return Err(Error::param("need at least two classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::param(alloc::format!("label {bad} out of range for {n_classes} classes")));
        }
        Ok(Self { inputs, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let f = self.features();
        let mut data = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
        }
        Self {
            inputs: Tensor::matrix(indices.len(), f, data).expect("nonempty subset"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Seeded split into (train, holdout) index lists with
    /// `round(fraction·n)` holdout samples.
    pub fn holdout_split(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let n = self.len();
        let k = ((fraction * n as f64) + 0.5) as usize;
        let perm = RngStream::new(seed).permutation(n);
        let mut holdout = perm[..k].to_vec();
        let mut train = perm[k..].to_vec();
        holdout.sort_unstable();
        train.sort_unstable();
        (train, holdout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelatedSpec {
    pub n_samples: usize,
    pub input_dim: usize,
    /// Indices of the inputs sharing the latent signal.
    pub signal_inputs: Vec<usize>,
    pub signal_std: f64,
    pub noise_std: f64,
    /// Per-signal-input gain on the latent; empty means all ones.
    pub gains: Vec<f64>,
}

impl Default for CorrelatedSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            input_dim: 20,
            signal_inputs: (0..8).collect(),
            signal_std: 1.0,
            noise_std: 1.0,
            gains: Vec::new(),
        }
    }
}

impl CorrelatedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.signal_inputs.len() < 2 {
            return Err(Error::param("the signal subset needs at least two inputs"));
        }
        if self.n_samples == 0 || self.input_dim == 0 {
            return Err(Error::param("dataset must be nonempty"));
        }
        if let Some(&j) = self.signal_inputs.iter().find(|&&j| j >= self.input_dim) {
            return Err(Error::param(alloc::format!("signal input {j} out of range")));
        }
        let mut sorted = self.signal_inputs.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.signal_inputs.len() {
            return Err(Error::param("signal inputs must be distinct"));
        }
        if !self.gains.is_empty() && self.gains.len() != self.signal_inputs.len() {
            return Err(Error::param("gains must match the signal subset"));
        }
        if !(self.signal_std >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::param("standard deviations must be >= 0"));
        }
        Ok(())
    }

    fn gain(&self, k: usize) -> f64 {
        self.gains.get(k).copied().unwrap_or(1.0)
    }
}

/// Samples where the inputs in the signal subset share one latent draw.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatedDataset {
    pub spec: CorrelatedSpec,
    pub inputs: Tensor,
    /// Latent signal per sample.
    pub latent: Vec<f64>,
    /// Label: 1 when the latent is positive, else 0.
    pub labels: Vec<usize>,
}

impl CorrelatedDataset {
    /// Signal component of every input (`gain·s` inside the subset, 0
    /// outside), same layout as `inputs`.
    pub fn signal_components(&self) -> Tensor {
        let d = self.spec.input_dim;
        let mut data = vec![0.0; self.latent.len() * d];
        for (n, &s) in self.latent.iter().enumerate() {
            for (k, &j) in self.spec.signal_inputs.iter().enumerate() {
                data[n * d + j] = self.spec.gain(k) * s;
            }
        }
        Tensor::matrix(self.latent.len(), d, data).expect("validated dimensions")
    }

    pub fn to_classification(&self) -> ClassificationData {
        ClassificationData {
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
            n_classes: 2,
        }
    }
}

pub fn gen_correlated_dataset(spec: &CorrelatedSpec, rng: &mut RngStream) -> Result<CorrelatedDataset> {
    spec.validate()?;
    let (n, d) = (spec.n_samples, spec.input_dim);
    let mut data = vec![0.0; n * d];
    let mut latent = Vec::with_capacity(n);
    for row in data.chunks_exact_mut(d) {
        let s = spec.signal_std * rng.normal();
        for v in row.iter_mut() {
            *v = spec.noise_std * rng.normal();
        }
        for (k, &j) in spec.signal_inputs.iter().enumerate() {
            row[j] += spec.gain(k) * s;
        }
        latent.push(s);
    }
    let labels = latent.iter().map(|&s| usize::from(s > 0.0)).collect();
    Ok(CorrelatedDataset {
        spec: spec.clone(),
        inputs: Tensor::matrix(n, d, data)?,
        latent,
        labels,
    })
}

/// Fraction of strictly positive entries in each column.
pub fn activation_rate(activations: &Tensor) -> Result<Vec<f64>> {
    if activations.shape().len() != 2 {
        return Err(Error::dims("activation_rate", activations.shape(), &[]));
    }
    let (n, units) = (activations.rows(), activations.cols());
    let mut counts = vec![0usize; units];
    for row in activations.data().chunks_exact(units) {
        for (c, &v) in counts.iter_mut().zip(row) {
            if v > 0.0 {
                *c += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}
