//! Node signal-to-noise ratio and matched-filter weights.
//!
//! For a node with inputs `xⱼ = sⱼ + nⱼ` and independent noise,
//! `SNR(w) = var(Σⱼ wⱼsⱼ) / Σⱼ wⱼ²·var(nⱼ) = wᵀCw / wᵀNw`.
//! The maximizing weights satisfy `wⱼ ∝ cov(sⱼ, Σₖ wₖsₖ) / var(nⱼ)`, i.e.
//! `w ∝ N⁻¹Cw`, which is solved here by normalized fixed-point iteration.
//! Under rectified inputs the noise variance is `aⱼ·var(nⱼʳ)` with `aⱼ` the
//! input's activation rate.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrInputs {
    signal_cov: Tensor,
    noise_var: Vec<f64>,
    raw_noise_var: Option<Vec<f64>>,
    act_rates: Option<Vec<f64>>,
}

impl SnrInputs {
    pub fn new(signal_cov: Tensor, noise_var: Vec<f64>) -> Result<Self> {
        let k = noise_var.len();
        if signal_cov.shape() != [k, k] {
            return Err(Error::dims("SnrInputs", signal_cov.shape(), &[k, k]));
        }
        for i in 0..k {
            for j in 0..i {
                if libm::fabs(signal_cov.at(i, j) - signal_cov.at(j, i)) > SYMMETRY_TOL {
                    return Err(Error::param("signal covariance must be symmetric"));
                }
            }
            if signal_cov.at(i, i) < -SYMMETRY_TOL {
                return Err(Error::param("signal covariance must be positive semi-definite"));
            }
        }
        if let Some(v) = noise_var.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::param(alloc::format!("noise variances must be > 0, got {v}")));
        }
        Ok(Self { signal_cov, noise_var, raw_noise_var: None, act_rates: None })
    }

    /// Rectified inputs: effective noise variance `aⱼ·var(nⱼʳ)`.
    pub fn with_activation(signal_cov: Tensor, raw_noise_var: Vec<f64>, act_rates: Vec<f64>) -> Result<Self> {
        if raw_noise_var.len() != act_rates.len() {
            return Err(Error::dims("SnrInputs", &[raw_noise_var.len()], &[act_rates.len()]));
        }
        if act_rates.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::param("activation rates must lie in [0, 1]"));
        }
        let noise: Vec<f64> = raw_noise_var.iter().zip(&act_rates).map(|(r, a)| a * r).collect();
        let mut s = Self::new(signal_cov, noise)?;
        s.raw_noise_var = Some(raw_noise_var);
        s.act_rates = Some(act_rates);
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.noise_var.len()
    }

    pub fn signal_cov(&self) -> &Tensor {
        &self.signal_cov
    }

    pub fn noise_var(&self) -> &[f64] {
        &self.noise_var
    }

    pub fn act_rates(&self) -> Option<&[f64]> {
        self.act_rates.as_deref()
    }

    pub fn raw_noise_var(&self) -> Option<&[f64]> {
        self.raw_noise_var.as_deref()
    }

    /// Per-input denominator of the optimal-weight map.
    fn denominator(&self) -> Vec<f64> {
        match (&self.raw_noise_var, &self.act_rates) {
            (Some(raw), Some(a)) => raw.iter().zip(a).map(|(r, a)| a * r).collect(),
            _ => self.noise_var.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeWeights {
    pub w: Vec<f64>,
    /// Scale shared by all inputs of the node.
    pub scale: f64,
}

impl NodeWeights {
    pub fn new(w: Vec<f64>) -> Self {
        Self { w, scale: 1.0 }
    }
}

pub fn node_snr(weights: &NodeWeights, inputs: &SnrInputs) -> Result<f64> {
    let w = &weights.w;
    if w.len() != inputs.dim() {
        return Err(Error::dims("node_snr", &[w.len()], &[inputs.dim()]));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::UndefinedSnr("all weights are zero"));
    }
    let cw = inputs.signal_cov.matvec(w)?;
    let signal = dot(w, &cw);
    let noise: f64 = w.iter().zip(&inputs.noise_var).map(|(wi, n)| wi * wi * n).sum();
    Ok(signal.max(0.0) / noise)
}

pub const MAX_ITERATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-10;

/// Fixed point of `w ← k·C·w ⊘ denom`, normalized to unit length each
/// iteration and returned with `scale = k`. Starts from the equal-weight
/// vector.
pub fn optimal_weights(inputs: &SnrInputs, scale: f64) -> Result<NodeWeights> {
    if !(scale > 0.0) {
        return Err(Error::param("scale must be > 0"));
    }
    let k = inputs.dim();
    if inputs.signal_cov.data().iter().all(|&v| v == 0.0) {
        return Err(Error::UndefinedSnr("signal covariance is zero"));
    }
    let denom = inputs.denominator();
    let mut w = vec![1.0 / libm::sqrt(k as f64); k];
    let mut residual = f64::INFINITY;
    for it in 0..MAX_ITERATIONS {
        let cw = inputs.signal_cov.matvec(&w)?;
        let mut next: Vec<f64> = cw.iter().zip(&denom).map(|(c, d)| c / d).collect();
        let norm = libm::sqrt(dot(&next, &next));
        if norm == 0.0 {
            // The start vector is orthogonal to the signal; perturb it.
            w = (0..k).map(|i| 1.0 + (i as f64 + 1.0) * 1e-3).collect();
            let n = libm::sqrt(dot(&w, &w));
            w.iter_mut().for_each(|v| *v /= n);
            continue;
        }
        next.iter_mut().for_each(|v| *v /= norm);
        residual = next
            .iter()
            .zip(&w)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max);
        w = next;
        if residual < TOLERANCE && it > 0 {
            return Ok(NodeWeights { w: w.iter().map(|v| v * scale).collect(), scale });
        }
    }
    Err(Error::Convergence { iterations: MAX_ITERATIONS, residual })
}

/// `1 − |cos∠(actual, optimal)|`; invariant to scale and sign.
pub fn snr_distance(actual: &NodeWeights, optimal: &NodeWeights) -> Result<f64> {
    let (a, b) = (&actual.w, &optimal.w);
    if a.len() != b.len() {
        return Err(Error::dims("snr_distance", &[a.len()], &[b.len()]));
    }
    let (na, nb) = (libm::sqrt(dot(a, a)), libm::sqrt(dot(b, b)));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSnr("zero weight vector"));
    }
    let cos = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - libm::fabs(cos))
}

/// Empirical signal covariance and residual noise variances from samples
/// `n × k`, given the signal part of each sample row.
pub fn estimate_snr_inputs(
    samples: &Tensor,
    mut signal_of: impl FnMut(usize, &[f64]) -> Vec<f64>,
) -> Result<SnrInputs> {
    if samples.shape().len() != 2 {
        return Err(Error::dims("estimate_snr_inputs", samples.shape(), &[]));
    }
    let (n, k) = (samples.rows(), samples.cols());
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut signals = Vec::with_capacity(n * k);
    let mut noise = Vec::with_capacity(n * k);
    for i in 0..n {
        let x = samples.row(i);
        let s = signal_of(i, x);
        if s.len() != k {
            return Err(Error::dims("signal extractor", &[k], &[s.len()]));
        }
        noise.extend(x.iter().zip(&s).map(|(xi, si)| xi - si));
        signals.extend(s);
    }
    let mean = |data: &[f64], j: usize| data.iter().skip(j).step_by(k).sum::<f64>() / n as f64;
    let s_mean: Vec<f64> = (0..k).map(|j| mean(&signals, j)).collect();
    let n_mean: Vec<f64> = (0..k).map(|j| mean(&noise, j)).collect();
    let denom = (n - 1) as f64;
    let mut cov = vec![0.0; k * k];
    let mut noise_var = vec![0.0; k];
    for i in 0..n {
        let s = &signals[i * k..(i + 1) * k];
        let e = &noise[i * k..(i + 1) * k];
        for a in 0..k {
            let da = s[a] - s_mean[a];
            for b in a..k {
                cov[a * k + b] += da * (s[b] - s_mean[b]);
            }
            let de = e[a] - n_mean[a];
            noise_var[a] += de * de;
        }
    }
    for a in 0..k {
        for b in a..k {
            cov[a * k + b] /= denom;
            cov[b * k + a] = cov[a * k + b];
        }
        noise_var[a] /= denom;
    }
    Ok(SnrInputs {
        signal_cov: Tensor::matrix(k, k, cov)?,
        noise_var,
        raw_noise_var: None,
        act_rates: None,
    })
}
