//! Parameter updates: NL-SGD, NL-Momentum and NL-NAG with decoupled weight
//! decay, plus the baseline optimizers they are compared against.
//!
//! Only kernel gradients pass through the transform (signed power, clip or
//! sign); bias gradients always enter their update raw. Weight decay is
//! applied as `θ ← θ − lr·u − λ·θ` with `λ` already converted from the
//! benchmark's L2 coefficient by [`lambda_effective`].

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transform::{self, ClipSpec, NlSpec};

/// One layer's trainable tensors: a kernel and an optional bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kernel: Tensor,
    pub bias: Option<Tensor>,
}

/// Kernels and biases of a model, grouped by layer. Gradients use the same
/// structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    layers: Vec<Layer>,
}

impl ParamSet {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    /// A single kernel with no bias, e.g. the parameter vector of a
    /// quadratic objective.
    pub fn single(kernel: Tensor) -> Self {
        Self::new(alloc::vec![Layer { kernel, bias: None }])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn kernels(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().map(|l| &l.kernel)
    }

    pub fn biases(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().filter_map(|l| l.bias.as_ref())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    kernel: l.kernel.zeros_like(),
                    bias: l.bias.as_ref().map(Tensor::zeros_like),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.kernel.len() + l.bias.as_ref().map_or(0, Tensor::len))
            .sum()
    }

    pub fn ensure_matches(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::dims(op, &[self.layers.len()], &[other.layers.len()]));
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            a.kernel.ensure_same_shape(&b.kernel, op)?;
            match (&a.bias, &b.bias) {
                (Some(x), Some(y)) => x.ensure_same_shape(y, op)?,
                (None, None) => {}
                (Some(x), None) => return Err(Error::dims(op, x.shape(), &[])),
                (None, Some(y)) => return Err(Error::dims(op, &[], y.shape())),
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.ensure_matches(other, "max_abs_diff")?;
        let mut m = 0.0f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            m = m.max(a.kernel.max_abs_diff(&b.kernel)?);
            if let (Some(x), Some(y)) = (&a.bias, &b.bias) {
                m = m.max(x.max_abs_diff(y)?);
            }
        }
        Ok(m)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.kernel.is_finite() && l.bias.as_ref().is_none_or(Tensor::is_finite))
    }

    /// All values, kernels first then bias, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.kernel.data());
            if let Some(b) = &l.bias {
                out.extend_from_slice(b.data());
            }
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) on an existing layout.
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::dims("assign_flat", &[self.num_params()], &[values.len()]));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.kernel.len();
            l.kernel.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
            if let Some(b) = &mut l.bias {
                let n = b.len();
                b.data_mut().copy_from_slice(&values[off..off + n]);
                off += n;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Nag,
    Adam,
    ClippedSgd,
    SignSgd,
    NlSgd,
    NlMomentum,
    NlNag,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 9] = [
        Self::Sgd,
        Self::Momentum,
        Self::Nag,
        Self::Adam,
        Self::ClippedSgd,
        Self::SignSgd,
        Self::NlSgd,
        Self::NlMomentum,
        Self::NlNag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Momentum => "momentum",
            Self::Nag => "nag",
            Self::Adam => "adam",
            Self::ClippedSgd => "clipped-sgd",
            Self::SignSgd => "sign-sgd",
            Self::NlSgd => "nl-sgd",
            Self::NlMomentum => "nl-momentum",
            Self::NlNag => "nl-nag",
        }
    }

    pub fn is_nl(self) -> bool {
        matches!(self, Self::NlSgd | Self::NlMomentum | Self::NlNag)
    }

    pub fn uses_momentum(self) -> bool {
        matches!(self, Self::Momentum | Self::Nag | Self::NlMomentum | Self::NlNag)
    }

    pub fn needs_lookahead(self) -> bool {
        matches!(self, Self::Nag | Self::NlNag)
    }

    /// The conventional optimizer an NL variant reduces to at `ν = 1`.
    pub fn linear_counterpart(self) -> Self {
        match self {
            Self::NlSgd => Self::Sgd,
            Self::NlMomentum => Self::Momentum,
            Self::NlNag => Self::Nag,
            other => other,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "mom" => "momentum",
            "nl-mom" => "nl-momentum",
            "signsgd" => "sign-sgd",
            "clipsgd" | "clip-sgd" => "clipped-sgd",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::Unsupported(alloc::format!("unknown optimizer kind {s:?}")))
    }
}

/// Where NAG evaluates its gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LookaheadConvention {
    /// `θ − lr·ρ·v`: the point the pending momentum step lands on.
    #[default]
    Standard,
    /// `θ + lr·v`: the opposite sign with no ρ factor.
    Inverted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub alpha: f64,
    pub nu: f64,
    pub rho: f64,
    pub lambda: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub clip_t: Option<f64>,
    pub epsilon_floor: f64,
    pub lookahead: LookaheadConvention,
    /// Scale the decay term by `lr / alpha` when a schedule changes `lr`.
    pub decay_follows_schedule: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            nu: 1.0,
            rho: 0.9,
            lambda: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_t: None,
            epsilon_floor: 0.0,
            lookahead: LookaheadConvention::Standard,
            decay_follows_schedule: false,
        }
    }
}

impl HyperParams {
    pub fn sgd(alpha: f64) -> Self {
        Self { alpha, rho: 0.0, ..Self::default() }
    }

    pub fn nl(alpha: f64, nu: f64) -> Self {
        Self { alpha, nu, rho: 0.0, ..Self::default() }
    }

    pub fn momentum(alpha: f64, rho: f64) -> Self {
        Self { alpha, rho, ..Self::default() }
    }

    pub fn with_nu(self, nu: f64) -> Self {
        Self { nu, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    /// `alpha = 0` is accepted: it freezes the parameters, which is useful as
    /// a control run.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::param(alloc::format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::param(alloc::format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(alloc::format!("lambda must be >= 0, got {}", self.lambda)));
        }
        NlSpec::with_floor(self.nu, self.epsilon_floor)?;
        if let Some(t) = self.clip_t {
            ClipSpec::new(t)?;
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::param("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps >= 0.0) {
            return Err(Error::param("adam epsilon must be >= 0"));
        }
        Ok(())
    }

    pub fn nl_spec(&self) -> Result<NlSpec> {
        NlSpec::with_floor(self.nu, self.epsilon_floor)
    }

    fn decay(&self, lr: f64) -> f64 {
        if self.decay_follows_schedule && self.alpha > 0.0 {
            self.lambda * lr / self.alpha
        } else {
            self.lambda
        }
    }
}

/// Decoupled decay strength matching an L2 coefficient `lambda_prime`:
/// `α·λ′/(1−ρ)`, which is exactly `α·λ′` without momentum.
pub fn lambda_effective(alpha: f64, lambda_prime: f64, rho: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::param(alloc::format!("alpha must be > 0, got {alpha}")));
    }
    if !(lambda_prime >= 0.0) {
        return Err(Error::param(alloc::format!("lambda' must be >= 0, got {lambda_prime}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::param(alloc::format!("rho must lie in [0, 1), got {rho}")));
    }
    if rho == 0.0 {
        Ok(alpha * lambda_prime)
    } else {
        Ok(alpha * lambda_prime / (1.0 - rho))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub velocity: Option<ParamSet>,
    pub first_moment: Option<ParamSet>,
    pub second_moment: Option<ParamSet>,
    pub step: u64,
    lookahead_for: Option<u64>,
}

impl OptimizerState {
    /// Zeroed buffers for whatever `kind` needs.
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        let adam = kind == OptimizerKind::Adam;
        Self {
            velocity: kind.uses_momentum().then(|| params.zeros_like()),
            first_moment: adam.then(|| params.zeros_like()),
            second_moment: adam.then(|| params.zeros_like()),
            step: 0,
            lookahead_for: None,
        }
    }

    fn velocity_mut(&mut self, params: &ParamSet) -> Result<&mut ParamSet> {
        let v = self
            .velocity
            .as_mut()
            .ok_or(Error::Protocol("momentum step without a velocity buffer"))?;
        v.ensure_matches(params, "optimizer state")?;
        Ok(v)
    }
}

/// How kernel gradients are mapped before entering the update.
#[derive(Clone, Copy)]
enum KernelMap {
    Raw,
    Power(NlSpec),
    Clip(ClipSpec),
    Sign,
}

impl KernelMap {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Raw => x,
            Self::Power(s) => s.apply(x),
            Self::Clip(c) => c.apply(x),
            Self::Sign => transform::sign(x),
        }
    }
}

/// `p ← p − lr·map(g) − decay·p`
fn descend(p: &mut Tensor, g: &Tensor, map: KernelMap, lr: f64, decay: f64) {
    for (w, &gi) in p.data_mut().iter_mut().zip(g.data()) {
        *w = *w - lr * map.apply(gi) - decay * *w;
    }
}

/// `v ← ρ·v + map(g)`, then `p ← p − lr·v − decay·p`
fn descend_momentum(
    p: &mut Tensor,
    v: &mut Tensor,
    g: &Tensor,
    map: KernelMap,
    rho: f64,
    lr: f64,
    decay: f64,
) {
    for ((w, vi), &gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
        *vi = rho * *vi + map.apply(gi);
        *w = *w - lr * *vi - decay * *w;
    }
}

fn plain_step(params: &mut ParamSet, grads: &ParamSet, map: KernelMap, lr: f64, decay: f64) -> Result<()> {
    params.ensure_matches(grads, "gradient")?;
    for (l, gl) in params.layers.iter_mut().zip(&grads.layers) {
        descend(&mut l.kernel, &gl.kernel, map, lr, decay);
        if let (Some(b), Some(gb)) = (&mut l.bias, &gl.bias) {
            descend(b, gb, KernelMap::Raw, lr, decay);
        }
    }
    Ok(())
}

fn momentum_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    map: KernelMap,
    rho: f64,
    lr: f64,
    decay: f64,
) -> Result<()> {
    params.ensure_matches(grads, "gradient")?;
    let vel = state.velocity_mut(params)?;
    for ((l, gl), vl) in params.layers.iter_mut().zip(&grads.layers).zip(&mut vel.layers) {
        descend_momentum(&mut l.kernel, &mut vl.kernel, &gl.kernel, map, rho, lr, decay);
        if let (Some(b), Some(gb), Some(vb)) = (&mut l.bias, &gl.bias, &mut vl.bias) {
            descend_momentum(b, vb, gb, KernelMap::Raw, rho, lr, decay);
        }
    }
    state.step += 1;
    Ok(())
}

/// NL-SGD: kernels step along `h_ν(g)`, biases along the raw gradient.
pub fn nl_sgd_step(params: &mut ParamSet, grads: &ParamSet, hp: &HyperParams, lr: f64) -> Result<()> {
    plain_step(params, grads, KernelMap::Power(hp.nl_spec()?), lr, hp.decay(lr))
}

/// NL-Momentum: `v ← ρv + h_ν(g)` on kernels, `v ← ρv + g` on biases.
pub fn nl_momentum_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    hp: &HyperParams,
    lr: f64,
) -> Result<()> {
    let map = KernelMap::Power(hp.nl_spec()?);
    momentum_step(params, grads, state, map, hp.rho, lr, hp.decay(lr))
}

/// Point at which the next NAG gradient must be evaluated. Marks the state so
/// that the matching NAG step for this iteration is accepted.
pub fn lookahead_point(
    params: &ParamSet,
    state: &mut OptimizerState,
    hp: &HyperParams,
    lr: f64,
) -> Result<ParamSet> {
    let vel = state
        .velocity
        .as_ref()
        .ok_or(Error::Protocol("lookahead requested without a velocity buffer"))?;
    vel.ensure_matches(params, "optimizer state")?;
    let coeff = match hp.lookahead {
        LookaheadConvention::Standard => -lr * hp.rho,
        LookaheadConvention::Inverted => lr,
    };
    let mut out = params.clone();
    for (l, vl) in out.layers.iter_mut().zip(&vel.layers) {
        l.kernel.axpy(coeff, &vl.kernel)?;
        if let (Some(b), Some(vb)) = (&mut l.bias, &vl.bias) {
            b.axpy(coeff, vb)?;
        }
    }
    state.lookahead_for = Some(state.step);
    Ok(out)
}

fn consume_lookahead(state: &mut OptimizerState) -> Result<()> {
    if state.lookahead_for.take() != Some(state.step) {
        return Err(Error::Protocol("NAG step without a preceding lookahead_point"));
    }
    Ok(())
}

/// NL-NAG. `grads` must have been evaluated at the point returned by
/// [`lookahead_point`] for this iteration.
pub fn nl_nag_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    hp: &HyperParams,
    lr: f64,
) -> Result<()> {
    consume_lookahead(state)?;
    let map = KernelMap::Power(hp.nl_spec()?);
    momentum_step(params, grads, state, map, hp.rho, lr, hp.decay(lr))
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    p: &mut Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    g: &Tensor,
    hp: &HyperParams,
    t: u64,
    lr: f64,
    decay: f64,
) {
    let (b1, b2) = (hp.adam_beta1, hp.adam_beta2);
    let c1 = 1.0 - libm::pow(b1, t as f64);
    let c2 = 1.0 - libm::pow(b2, t as f64);
    for (((w, mi), vi), &gi) in p
        .data_mut()
        .iter_mut()
        .zip(m.data_mut())
        .zip(v.data_mut())
        .zip(g.data())
    {
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *w = *w - lr * m_hat / (libm::sqrt(v_hat) + hp.adam_eps) - decay * *w;
    }
}

fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    hp: &HyperParams,
    lr: f64,
) -> Result<()> {
    params.ensure_matches(grads, "gradient")?;
    let decay = hp.decay(lr);
    let t = state.step + 1;
    let (Some(m), Some(v)) = (state.first_moment.as_mut(), state.second_moment.as_mut()) else {
        return Err(Error::Protocol("adam step without moment buffers"));
    };
    m.ensure_matches(params, "optimizer state")?;
    v.ensure_matches(params, "optimizer state")?;
    for (((l, gl), ml), vl) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut m.layers)
        .zip(&mut v.layers)
    {
        adam_update(&mut l.kernel, &mut ml.kernel, &mut vl.kernel, &gl.kernel, hp, t, lr, decay);
        if let (Some(b), Some(gb), Some(mb), Some(vb)) = (&mut l.bias, &gl.bias, &mut ml.bias, &mut vl.bias) {
            adam_update(b, mb, vb, gb, hp, t, lr, decay);
        }
    }
    state.step = t;
    Ok(())
}

/// Conventional optimizers. NAG requires [`lookahead_point`] first, like
/// NL-NAG. Clipped and sign SGD transform kernel gradients only.
pub fn baseline_step(
    kind: OptimizerKind,
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
    hp: &HyperParams,
    lr: f64,
) -> Result<()> {
    let decay = hp.decay(lr);
    match kind {
        OptimizerKind::Sgd => plain_step(params, grads, KernelMap::Raw, lr, decay)?,
        OptimizerKind::SignSgd => plain_step(params, grads, KernelMap::Sign, lr, decay)?,
        OptimizerKind::ClippedSgd => {
            let t = hp
                .clip_t
                .ok_or_else(|| Error::param("clipped-sgd requires clip_t"))?;
            plain_step(params, grads, KernelMap::Clip(ClipSpec::new(t)?), lr, decay)?
        }
        OptimizerKind::Momentum => {
            return momentum_step(params, grads, state, KernelMap::Raw, hp.rho, lr, decay)
        }
        OptimizerKind::Nag => {
            consume_lookahead(state)?;
            return momentum_step(params, grads, state, KernelMap::Raw, hp.rho, lr, decay);
        }
        OptimizerKind::Adam => return adam_step(params, grads, state, hp, lr),
        nl => {
            return Err(Error::Unsupported(alloc::format!(
                "{nl} is not a baseline optimizer"
            )))
        }
    }
    state.step += 1;
    Ok(())
}

/// An optimizer kind bound to its hyperparameters and state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    kind: OptimizerKind,
    hp: HyperParams,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, hp: HyperParams, params: &ParamSet) -> Result<Self> {
        hp.validate()?;
        if kind == OptimizerKind::ClippedSgd && hp.clip_t.is_none() {
            return Err(Error::param("clipped-sgd requires clip_t"));
        }
        Ok(Self {
            kind,
            hp,
            state: OptimizerState::new(kind, params),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// Gradient evaluation point for this iteration; `None` when the
    /// gradient is taken at the current parameters.
    pub fn lookahead(&mut self, params: &ParamSet, lr: f64) -> Result<Option<ParamSet>> {
        if self.kind.needs_lookahead() {
            lookahead_point(params, &mut self.state, &self.hp, lr).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::NlSgd => {
                nl_sgd_step(params, grads, &self.hp, lr)?;
                self.state.step += 1;
                Ok(())
            }
            OptimizerKind::NlMomentum => nl_momentum_step(params, grads, &mut self.state, &self.hp, lr),
            OptimizerKind::NlNag => nl_nag_step(params, grads, &mut self.state, &self.hp, lr),
            kind => baseline_step(kind, params, grads, &mut self.state, &self.hp, lr),
        }
    }
}
