//! Differentiable objectives used to exercise the optimizers.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optim::ParamSet;
use crate::rng::RngStream;

pub mod data;
pub mod mlp;
pub mod quadratic;
mod reference_spectrum;
pub mod toy;

pub use data::{activation_rate, gen_correlated_dataset, ClassificationData, CorrelatedDataset, CorrelatedSpec};
pub use mlp::{mlp_loss_grad, CorrelatedMlpSpec, MlpClassifier, MlpProblem};
pub use quadratic::{build_quadratic_deep, quadratic_loss_grad, QuadraticDeep, QuadraticProblem, QuadraticSpec};
pub use toy::{
    toy_single_grad, toy_three_product_step, ProductStep, ToySingleNode, ToySingleProblem,
    ToySpec, ToyThreeNode, ToyThreeProblem,
};

/// How training batches are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Every batch is a fresh draw from the data distribution.
    Online,
    /// Batches are slices of a shuffled, finite training set.
    Finite { n_train: usize },
}

pub enum BatchSource<'a> {
    Fresh { size: usize, rng: &'a mut RngStream },
    Indices(&'a [usize]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Validation,
    Test,
}

/// Whether a problem is scored by loss (lower is better) or by accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Loss,
    Accuracy,
}

impl MetricKind {
    /// True when `a` is strictly better than `b`. Non-finite values lose.
    pub fn better(self, a: f64, b: f64) -> bool {
        match (a.is_finite(), b.is_finite()) {
            (true, false) => true,
            (false, _) => false,
            (true, true) => match self {
                MetricKind::Loss => a < b,
                MetricKind::Accuracy => a > b,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(with = "crate::floats::scalar")]
    pub loss: f64,
    #[serde(with = "crate::floats::option")]
    pub accuracy: Option<f64>,
}

impl Evaluation {
    pub fn metric(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Loss => self.loss,
            MetricKind::Accuracy => self.accuracy.unwrap_or(f64::NAN),
        }
    }
}

/// A trainable objective: parameter initialization, batch production,
/// loss-and-gradient, and held-out evaluation.
pub trait Objective {
    type Batch;

    fn name(&self) -> String;
    fn regime(&self) -> Regime;
    fn metric(&self) -> MetricKind;
    fn init_params(&self, rng: &mut RngStream) -> ParamSet;
    fn draw_batch(&self, source: BatchSource<'_>) -> Self::Batch;
    fn loss_grad(&self, params: &ParamSet, batch: &Self::Batch) -> Result<(f64, ParamSet)>;
    fn evaluate(&self, params: &ParamSet, split: Split) -> Result<Evaluation>;
}
