//! Run engine: learning-rate schedules, the epoch loop, divergence handling
//! and multi-seed repeats.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{HyperParams, Optimizer, OptimizerKind, ParamSet};
use crate::problems::mlp::CorrelatedMlpSpec;
use crate::problems::quadratic::QuadraticSpec;
use crate::problems::toy::ToySpec;
use crate::problems::{
    BatchSource, Evaluation, MetricKind, MlpProblem, Objective, QuadraticDeep, Regime, Split,
    ToySingleProblem, ToyThreeProblem,
};
use crate::rng::{derive_seed, RngStream};
use crate::snr::{snr_distance, NodeWeights};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    /// Divide the rate by `annihilation_factor` for the final
    /// `annihilation_epochs` epochs.
    Annihilation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub base_lr: f64,
    pub total_epochs: usize,
    pub annihilation_factor: f64,
    pub annihilation_epochs: usize,
}

impl ScheduleSpec {
    pub fn constant(base_lr: f64, total_epochs: usize) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            base_lr,
            total_epochs,
            annihilation_factor: 10.0,
            annihilation_epochs: 5,
        }
    }

    pub fn annihilation(base_lr: f64, total_epochs: usize) -> Self {
        Self { kind: ScheduleKind::Annihilation, ..Self::constant(base_lr, total_epochs) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::param("total_epochs must be positive"));
        }
        if !(self.base_lr >= 0.0) || !self.base_lr.is_finite() {
            return Err(Error::param(alloc::format!("base_lr must be >= 0, got {}", self.base_lr)));
        }
        if self.kind == ScheduleKind::Annihilation {
            if self.annihilation_epochs >= self.total_epochs {
                return Err(Error::param(alloc::format!(
                    "annihilation_epochs ({}) must be below total_epochs ({})",
                    self.annihilation_epochs,
                    self.total_epochs
                )));
            }
            if !(self.annihilation_factor > 1.0) {
                return Err(Error::param("annihilation_factor must be > 1"));
            }
        }
        Ok(())
    }
}

pub fn schedule_lr(s: &ScheduleSpec, epoch: usize) -> Result<f64> {
    s.validate()?;
    if epoch >= s.total_epochs {
        return Err(Error::param(alloc::format!(
            "epoch {epoch} outside 0..{}",
            s.total_epochs
        )));
    }
    Ok(match s.kind {
        ScheduleKind::Constant => s.base_lr,
        ScheduleKind::Annihilation if epoch >= s.total_epochs - s.annihilation_epochs => {
            s.base_lr / s.annihilation_factor
        }
        ScheduleKind::Annihilation => s.base_lr,
    })
}

/// Problem selection for a run. Image-backed problems are resolved by the
/// `nlgrad` crate, which owns file IO.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    QuadraticDeep(QuadraticSpec),
    CorrelatedMlp(CorrelatedMlpSpec),
    ToySingle {
        #[serde(default)]
        spec: ToySpec,
        init: [f64; 2],
    },
    ToyThree {
        #[serde(default)]
        spec: ToySpec,
        w: f64,
        kappa: f64,
    },
    ImageMlp {
        train_path: String,
        test_path: String,
        hidden: Vec<usize>,
        #[serde(default = "default_valid_fraction")]
        valid_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
}

fn default_valid_fraction() -> f64 {
    0.1
}

impl ProblemConfig {
    pub fn id(&self) -> &'static str {
        match self {
            Self::QuadraticDeep(_) => "quadratic_deep",
            Self::CorrelatedMlp(_) => "correlated_mlp",
            Self::ToySingle { .. } => "toy_single",
            Self::ToyThree { .. } => "toy_three",
            Self::ImageMlp { .. } => "image_mlp",
        }
    }

    pub fn build(&self) -> Result<BuiltProblem> {
        Ok(match self {
            Self::QuadraticDeep(s) => BuiltProblem::Quadratic(Box::new(QuadraticDeep::new(s.clone())?)),
            Self::CorrelatedMlp(s) => BuiltProblem::Mlp(Box::new(MlpProblem::correlated(s)?)),
            Self::ToySingle { spec, init } => {
                BuiltProblem::ToySingle(Box::new(ToySingleProblem::new(spec.clone(), *init)?))
            }
            Self::ToyThree { spec, w, kappa } => {
                BuiltProblem::ToyThree(Box::new(ToyThreeProblem::new(spec.clone(), *w, *kappa)?))
            }
            Self::ImageMlp { .. } => {
                return Err(Error::Unsupported("image datasets are loaded by the nlgrad crate".into()))
            }
        })
    }
}

pub enum BuiltProblem {
    Quadratic(Box<QuadraticDeep>),
    Mlp(Box<MlpProblem>),
    ToySingle(Box<ToySingleProblem>),
    ToyThree(Box<ToyThreeProblem>),
}

impl BuiltProblem {
    pub fn train(&self, cfg: &RunConfig) -> Result<RunRecord> {
        match self {
            Self::Quadratic(p) => train_objective(p.as_ref(), cfg),
            Self::Mlp(p) => train_objective(p.as_ref(), cfg),
            Self::ToySingle(p) => train_objective(p.as_ref(), cfg),
            Self::ToyThree(p) => train_objective(p.as_ref(), cfg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub optimizer: OptimizerKind,
    pub hyper: HyperParams,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default = "default_factor")]
    pub annihilation_factor: f64,
    #[serde(default = "default_annihilation_epochs")]
    pub annihilation_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Batches per epoch for problems that sample fresh data.
    #[serde(default = "default_batches_per_epoch")]
    pub batches_per_epoch: usize,
    pub seed: u64,
    /// Evaluate held-out sets every this many epochs (and always at the end).
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Stop when the training loss exceeds this multiple of the first loss.
    #[serde(default = "default_divergence_factor")]
    pub divergence_factor: f64,
    #[serde(default)]
    pub label: Option<String>,
}

fn default_factor() -> f64 {
    10.0
}
fn default_annihilation_epochs() -> usize {
    5
}
fn default_batches_per_epoch() -> usize {
    100
}
fn default_eval_every() -> usize {
    1
}
fn default_divergence_factor() -> f64 {
    1e6
}

impl RunConfig {
    pub fn new(problem: ProblemConfig, optimizer: OptimizerKind, hyper: HyperParams) -> Self {
        Self {
            problem,
            optimizer,
            hyper,
            schedule: ScheduleKind::Constant,
            annihilation_factor: default_factor(),
            annihilation_epochs: default_annihilation_epochs(),
            epochs: 100,
            batch_size: 128,
            batches_per_epoch: default_batches_per_epoch(),
            seed: 0,
            eval_every: default_eval_every(),
            divergence_factor: default_divergence_factor(),
            label: None,
        }
    }

    pub fn schedule_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            kind: self.schedule,
            base_lr: self.hyper.alpha,
            total_epochs: self.epochs,
            annihilation_factor: self.annihilation_factor,
            annihilation_epochs: self.annihilation_epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.schedule_spec().validate()?;
        if self.batch_size == 0 || self.batches_per_epoch == 0 || self.eval_every == 0 {
            return Err(Error::param("batch_size, batches_per_epoch and eval_every must be positive"));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::param("divergence_factor must be > 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    #[serde(with = "crate::floats::scalar")]
    pub train_loss: f64,
    pub valid: Option<Evaluation>,
    pub test: Option<Evaluation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    #[serde(with = "crate::floats::scalar")]
    pub train_loss: f64,
    pub valid: Evaluation,
    pub test: Evaluation,
}

/// Held-out metrics of the parameters before the first step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialMetrics {
    pub valid: Evaluation,
    pub test: Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub problem: String,
    pub metric: MetricKind,
    pub initial: InitialMetrics,
    pub epochs: Vec<EpochMetrics>,
    #[serde(rename = "final")]
    pub final_metrics: FinalMetrics,
    pub steps: u64,
    pub flagged: bool,
    pub flag_reason: Option<String>,
    #[serde(with = "crate::floats::option", default)]
    pub wall_time_secs: Option<f64>,
    /// Per-epoch `1 − |cos|` distance to the SNR-optimal weights, when the
    /// problem defines one.
    #[serde(with = "crate::floats::option_vec", default)]
    pub snr_distance: Option<Vec<f64>>,
    /// Per-epoch effective path weights of the toy models: `[v₁, v₂]` for the
    /// single node and `[w₁₁w₁₂, w₂₁w₂₂]` for the three-node model.
    #[serde(with = "crate::floats::option_pairs", default)]
    pub products: Option<Vec<[f64; 2]>>,
}

impl RunRecord {
    pub fn final_valid_metric(&self) -> f64 {
        self.final_metrics.valid.metric(self.metric)
    }

    pub fn final_test_metric(&self) -> f64 {
        self.final_metrics.test.metric(self.metric)
    }
}

/// Per-epoch extras recorded for problems that support them.
pub trait Diagnostics {
    fn snr_distance(&self, _params: &ParamSet) -> Option<f64> {
        None
    }
    fn products(&self, _params: &ParamSet) -> Option<[f64; 2]> {
        None
    }
}

impl Diagnostics for QuadraticDeep {}
impl Diagnostics for MlpProblem {}

impl Diagnostics for ToySingleProblem {
    /// Distance to the equal-weight vector, which maximizes the node's SNR.
    fn snr_distance(&self, params: &ParamSet) -> Option<f64> {
        let w = NodeWeights::new(params.layers()[0].kernel.data().to_vec());
        snr_distance(&w, &NodeWeights::new(alloc::vec![1.0, 1.0])).ok()
    }

    fn products(&self, params: &ParamSet) -> Option<[f64; 2]> {
        let k = params.layers()[0].kernel.data();
        Some([k[0], k[1]])
    }
}

impl Diagnostics for ToyThreeProblem {
    fn products(&self, params: &ParamSet) -> Option<[f64; 2]> {
        Some(self.node(params).products())
    }
}

fn final_metrics<P: Objective>(p: &P, params: &ParamSet, train_loss: f64) -> Result<FinalMetrics> {
    Ok(FinalMetrics {
        train_loss,
        valid: p.evaluate(params, Split::Validation)?,
        test: p.evaluate(params, Split::Test)?,
    })
}

/// Train `problem` as described by `cfg` (whose `problem` field is only
/// recorded, not consulted).
pub fn train_objective<P: Objective + Diagnostics>(problem: &P, cfg: &RunConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let schedule = cfg.schedule_spec();
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.child(0);
    let mut batch_rng = root.child(1);

    let mut params = problem.init_params(&mut init_rng);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.hyper, &params)?;
    let initial = InitialMetrics {
        valid: problem.evaluate(&params, Split::Validation)?,
        test: problem.evaluate(&params, Split::Test)?,
    };

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut snr_trace = Vec::new();
    let mut product_trace = Vec::new();
    let mut reference_loss: Option<f64> = None;
    let mut flag_reason: Option<String> = None;
    let mut last_train_loss = f64::NAN;
    let mut steps = 0u64;

    'epochs: for epoch in 0..cfg.epochs {
        let lr = schedule_lr(&schedule, epoch)?;
        let plan: Vec<Vec<usize>> = match problem.regime() {
            Regime::Online => Vec::new(),
            Regime::Finite { n_train } => {
                let order = batch_rng.permutation(n_train);
                order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
            }
        };
        let n_batches = if plan.is_empty() { cfg.batches_per_epoch } else { plan.len() };
        let mut loss_sum = 0.0;
        for b in 0..n_batches {
            let batch = if plan.is_empty() {
                problem.draw_batch(BatchSource::Fresh { size: cfg.batch_size, rng: &mut batch_rng })
            } else {
                problem.draw_batch(BatchSource::Indices(&plan[b]))
            };
            let (loss, grads) = match opt.lookahead(&params, lr)? {
                Some(at) => problem.loss_grad(&at, &batch)?,
                None => problem.loss_grad(&params, &batch)?,
            };
            let reference = *reference_loss.get_or_insert(loss);
            if !loss.is_finite() {
                flag_reason = Some(alloc::format!("non-finite training loss at epoch {epoch}, batch {b}"));
            } else if loss > cfg.divergence_factor * reference.abs().max(f64::MIN_POSITIVE) {
                flag_reason = Some(alloc::format!(
                    "training loss {loss:e} exceeded {}x the initial loss at epoch {epoch}",
                    cfg.divergence_factor
                ));
            }
            if flag_reason.is_some() {
                last_train_loss = loss;
                break 'epochs;
            }
            loss_sum += loss;
            opt.step(&mut params, &grads, lr)?;
            steps += 1;
        }
        last_train_loss = loss_sum / n_batches as f64;
        let evaluate = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
        let (valid, test) = if evaluate {
            (
                Some(problem.evaluate(&params, Split::Validation)?),
                Some(problem.evaluate(&params, Split::Test)?),
            )
        } else {
            (None, None)
        };
        epochs.push(EpochMetrics { epoch, lr, train_loss: last_train_loss, valid, test });
        if let Some(d) = problem.snr_distance(&params) {
            snr_trace.push(d);
        }
        if let Some(p) = problem.products(&params) {
            product_trace.push(p);
        }
    }

    Ok(RunRecord {
        config: cfg.clone(),
        problem: problem.name(),
        metric: problem.metric(),
        initial,
        epochs,
        final_metrics: final_metrics(problem, &params, last_train_loss)?,
        steps,
        flagged: flag_reason.is_some(),
        flag_reason,
        wall_time_secs: None,
        snr_distance: (!snr_trace.is_empty()).then_some(snr_trace),
        products: (!product_trace.is_empty()).then_some(product_trace),
    })
}

/// Build the configured problem and train on it.
pub fn run_training(cfg: &RunConfig) -> Result<RunRecord> {
    cfg.problem.build()?.train(cfg)
}

/// Runs a batch of configurations. Implementations may run them in any
/// order or in parallel but must return results in input order.
pub trait Executor {
    fn run_all(&self, cfgs: &[RunConfig]) -> Vec<Result<RunRecord>>;
}

/// Runs configurations one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run_all(&self, cfgs: &[RunConfig]) -> Vec<Result<RunRecord>> {
        cfgs.iter().map(run_training).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: MetricKind,
    #[serde(with = "crate::floats::scalar")]
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    #[serde(with = "crate::floats::scalar")]
    pub std: f64,
    pub n: usize,
    pub n_flagged: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64))
}

/// Summary of the final test metric. Flagged runs are included unless
/// `exclude_flagged` is set.
pub fn summarize_records(records: &[RunRecord], exclude_flagged: bool) -> Option<Summary> {
    let metric = records.first()?.metric;
    let kept: Vec<f64> = records
        .iter()
        .filter(|r| !(exclude_flagged && r.flagged))
        .map(RunRecord::final_test_metric)
        .collect();
    let (mean, std) = mean_std(&kept);
    Some(Summary {
        metric,
        mean,
        std,
        n: kept.len(),
        n_flagged: records.iter().filter(|r| r.flagged).count(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Seed of repeat `index` under a master seed.
pub fn repeat_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

/// `n_seeds` runs of `cfg` with seeds derived from `cfg.seed`.
pub fn run_repeats(
    cfg: &RunConfig,
    n_seeds: usize,
    exclude_flagged: bool,
    executor: &dyn Executor,
) -> Result<RepeatResult> {
    if n_seeds == 0 {
        return Err(Error::param("n_seeds must be >= 1"));
    }
    cfg.validate()?;
    let cfgs: Vec<RunConfig> = (0..n_seeds)
        .map(|i| RunConfig { seed: repeat_seed(cfg.seed, i), ..cfg.clone() })
        .collect();
    let records = executor.run_all(&cfgs).into_iter().collect::<Result<Vec<_>>>()?;
    let summary = summarize_records(&records, exclude_flagged)
        .ok_or_else(|| Error::param("no records".to_string()))?;
    Ok(RepeatResult { records, summary })
}
