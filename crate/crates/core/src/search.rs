//! Random hyperparameter search and grid sweeps over (ν, learning rate).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{lambda_effective, HyperParams, OptimizerKind};
use crate::problems::MetricKind;
use crate::rng::{derive_seed, RngStream};
use crate::train::{mean_std, summarize_records, Executor, RunConfig, RunRecord, Summary};

/// Offset separating the seeds of the final reruns from the sample seeds.
const FINAL_SEED_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpec {
    pub budget: usize,
    pub lr_low: f64,
    pub lr_high: f64,
    pub nu_choices: Vec<f64>,
    /// Momentum coefficient used by the momentum variants.
    pub rho: f64,
    /// Selection metric; `None` uses the problem's own metric.
    pub selection: Option<MetricKind>,
    pub final_repeats: usize,
    /// Weight decay in the unscaled parameterization, converted per sample.
    pub lambda_prime: f64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            budget: 50,
            lr_low: 1e-4,
            lr_high: 1.0,
            nu_choices: alloc::vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            rho: 0.9,
            selection: None,
            final_repeats: 10,
            lambda_prime: 0.0,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::param("search budget must be >= 1"));
        }
        if !(self.lr_low > 0.0 && self.lr_low < self.lr_high && self.lr_high.is_finite()) {
            return Err(Error::param(format!(
                "learning-rate bounds must satisfy 0 < low < high, got [{}, {}]",
                self.lr_low, self.lr_high
            )));
        }
        if self.nu_choices.is_empty() || self.nu_choices.iter().any(|n| !(0.0..=1.0).contains(n)) {
            return Err(Error::param("nu_choices must be a nonempty subset of [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::param(format!("rho must be in [0, 1), got {}", self.rho)));
        }
        Ok(())
    }
}

/// One draw: log-uniform learning rate, then a uniform choice of ν.
/// ρ is always `spec.rho`.
pub fn sample_hyperparams(spec: &SearchSpec, rng: &mut RngStream) -> Result<HyperParams> {
    spec.validate()?;
    let (lo, hi) = (libm::log(spec.lr_low), libm::log(spec.lr_high));
    let alpha = libm::exp(rng.uniform_range(lo, hi)).clamp(spec.lr_low, spec.lr_high);
    let nu = spec.nu_choices[rng.below(spec.nu_choices.len())];
    Ok(HyperParams { alpha, nu, rho: spec.rho, ..HyperParams::default() })
}

/// Adapt a drawn sample to an optimizer: ν only applies to the NL family
/// and ρ only to momentum methods.
pub fn hyperparams_for(kind: OptimizerKind, drawn: &HyperParams, base: &HyperParams, lambda_prime: f64) -> Result<HyperParams> {
    let rho = if kind.uses_momentum() { drawn.rho } else { 0.0 };
    let nu = if kind.is_nl() { drawn.nu } else { 1.0 };
    let mut hp = HyperParams { alpha: drawn.alpha, nu, rho, ..*base };
    hp.lambda = lambda_effective(hp.alpha, lambda_prime, rho)?;
    Ok(hp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSample {
    pub index: usize,
    pub seed: u64,
    pub hyper: HyperParams,
    #[serde(with = "crate::floats::scalar")]
    pub score: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub optimizer: OptimizerKind,
    pub problem: String,
    pub spec: SearchSpec,
    pub master_seed: u64,
    pub metric: MetricKind,
    pub samples: Vec<SearchSample>,
    /// Index into `samples`; `None` when every sample diverged.
    pub best: Option<usize>,
    pub final_records: Vec<RunRecord>,
    pub summary: Option<Summary>,
}

impl SearchResult {
    pub fn failed(&self) -> bool {
        self.best.is_none()
    }

    pub fn best_sample(&self) -> Option<&SearchSample> {
        self.best.map(|i| &self.samples[i])
    }
}

/// Index of the best usable sample. Flagged or non-finite samples are
/// skipped and ties keep the earliest index.
pub fn select_best(samples: &[SearchSample], metric: MetricKind) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in samples.iter().enumerate() {
        if s.flagged || !s.score.is_finite() {
            continue;
        }
        match best {
            Some(b) if !metric.better(s.score, samples[b].score) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// `spec.budget` single-seed runs of sampled hyperparameters, then
/// `spec.final_repeats` reruns of the best sample on fresh derived seeds.
pub fn run_medium_search(
    base: &RunConfig,
    kind: OptimizerKind,
    spec: &SearchSpec,
    master_seed: u64,
    executor: &dyn Executor,
) -> Result<SearchResult> {
    spec.validate()?;
    let mut sampler = RngStream::derived(master_seed, 0);
    let mut cfgs = Vec::with_capacity(spec.budget);
    for i in 0..spec.budget {
        let drawn = sample_hyperparams(spec, &mut sampler)?;
        let hyper = hyperparams_for(kind, &drawn, &base.hyper, spec.lambda_prime)?;
        cfgs.push(RunConfig {
            optimizer: kind,
            hyper,
            seed: derive_seed(master_seed, 1 + i as u64),
            ..base.clone()
        });
    }
    let records = executor.run_all(&cfgs).into_iter().collect::<Result<Vec<_>>>()?;
    let metric = spec.selection.unwrap_or(records[0].metric);
    let samples: Vec<SearchSample> = records
        .iter()
        .zip(&cfgs)
        .enumerate()
        .map(|(index, (r, c))| SearchSample {
            index,
            seed: c.seed,
            hyper: c.hyper,
            score: r.final_metrics.valid.metric(metric),
            flagged: r.flagged,
        })
        .collect();
    let best = select_best(&samples, metric);

    let (final_records, summary) = match best {
        Some(b) => {
            let finals: Vec<RunConfig> = (0..spec.final_repeats)
                .map(|j| RunConfig {
                    seed: derive_seed(master_seed, FINAL_SEED_OFFSET + j as u64),
                    ..cfgs[b].clone()
                })
                .collect();
            let recs = executor.run_all(&finals).into_iter().collect::<Result<Vec<_>>>()?;
            let summary = summarize_records(&recs, false);
            (recs, summary)
        }
        None => (Vec::new(), None),
    };

    Ok(SearchResult {
        optimizer: kind,
        problem: records[0].problem.clone(),
        spec: spec.clone(),
        master_seed,
        metric,
        samples,
        best,
        final_records,
        summary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub nu: f64,
    pub lr: f64,
    /// Mean final validation metric over seeds; `None` when flagged.
    #[serde(with = "crate::floats::option")]
    pub mean: Option<f64>,
    #[serde(with = "crate::floats::vec")]
    pub values: Vec<f64>,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub optimizer: OptimizerKind,
    pub problem: String,
    pub metric: MetricKind,
    pub nus: Vec<f64>,
    pub lrs: Vec<f64>,
    /// Row-major: `cells[i * lrs.len() + j]` holds `(nus[i], lrs[j])`.
    pub cells: Vec<GridCell>,
}

impl Grid {
    pub fn cell(&self, nu_index: usize, lr_index: usize) -> &GridCell {
        &self.cells[nu_index * self.lrs.len() + lr_index]
    }

    /// Best unflagged cell under the grid metric, earliest on ties.
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best_in(|_| true)
    }

    pub fn best_in(&self, keep: impl Fn(&GridCell) -> bool) -> Option<&GridCell> {
        let mut best: Option<&GridCell> = None;
        for c in self.cells.iter().filter(|c| keep(c)) {
            let Some(m) = c.mean else { continue };
            if !m.is_finite() {
                continue;
            }
            match best {
                Some(b) if !self.metric.better(m, b.mean.unwrap_or(f64::NAN)) => {}
                _ => best = Some(c),
            }
        }
        best
    }

    /// Learning rate of the best cell in each ν row.
    pub fn best_lr_per_nu(&self) -> Vec<Option<f64>> {
        (0..self.nus.len())
            .map(|i| {
                let row = &self.cells[i * self.lrs.len()..(i + 1) * self.lrs.len()];
                let mut best: Option<&GridCell> = None;
                for c in row {
                    let Some(m) = c.mean.filter(|m| m.is_finite()) else { continue };
                    match best {
                        Some(b) if !self.metric.better(m, b.mean.unwrap_or(f64::NAN)) => {}
                        _ => best = Some(c),
                    }
                }
                best.map(|c| c.lr)
            })
            .collect()
    }
}

/// Evaluate every (ν, lr) pair with `seeds_per_cell` seeds derived from
/// `base.seed`. Every cell shares the same seed set.
pub fn grid_sweep(
    base: &RunConfig,
    kind: OptimizerKind,
    nus: &[f64],
    lrs: &[f64],
    seeds_per_cell: usize,
    executor: &dyn Executor,
) -> Result<Grid> {
    if nus.is_empty() || lrs.is_empty() || seeds_per_cell == 0 {
        return Err(Error::param("grid axes and seed count must be nonempty"));
    }
    let mut cfgs = Vec::with_capacity(nus.len() * lrs.len() * seeds_per_cell);
    for &nu in nus {
        for &lr in lrs {
            for s in 0..seeds_per_cell {
                let hyper = HyperParams { alpha: lr, nu, ..base.hyper };
                cfgs.push(RunConfig {
                    optimizer: kind,
                    hyper,
                    seed: derive_seed(base.seed, s as u64),
                    ..base.clone()
                });
            }
        }
    }
    let records = executor.run_all(&cfgs).into_iter().collect::<Result<Vec<_>>>()?;
    let metric = records[0].metric;
    let mut cells = Vec::with_capacity(nus.len() * lrs.len());
    for (k, chunk) in records.chunks(seeds_per_cell).enumerate() {
        let values: Vec<f64> = chunk.iter().map(RunRecord::final_valid_metric).collect();
        let flagged = chunk.iter().any(|r| r.flagged) || values.iter().any(|v| !v.is_finite());
        cells.push(GridCell {
            nu: nus[k / lrs.len()],
            lr: lrs[k % lrs.len()],
            mean: (!flagged).then(|| mean_std(&values).0),
            values,
            flagged,
        });
    }
    Ok(Grid {
        optimizer: kind,
        problem: records[0].problem.clone(),
        metric,
        nus: nus.to_vec(),
        lrs: lrs.to_vec(),
        cells,
    })
}

/// `n` log-spaced values from `low` to `high` inclusive.
pub fn log_space(low: f64, high: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![low];
    }
    let (a, b) = (libm::log10(low), libm::log10(high));
    (0..n)
        .map(|i| libm::pow(10.0, a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(index: usize, score: f64, flagged: bool) -> SearchSample {
        SearchSample { index, seed: 0, hyper: HyperParams::default(), score, flagged }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SearchSpec { budget: 0, ..Default::default() }.validate().is_err());
        assert!(SearchSpec { lr_low: 1.0, lr_high: 1.0, ..Default::default() }.validate().is_err());
        assert!(SearchSpec { lr_low: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn selection_prefers_earliest_on_ties() {
        let s = [sample(0, 0.5, false), sample(1, 0.7, false), sample(2, 0.7, false)];
        assert_eq!(select_best(&s, MetricKind::Accuracy), Some(1));
        assert_eq!(select_best(&s, MetricKind::Loss), Some(0));
    }

    #[test]
    fn selection_skips_flagged() {
        let s = [sample(0, f64::NAN, true), sample(1, 3.0, false), sample(2, 1.0, true)];
        assert_eq!(select_best(&s, MetricKind::Loss), Some(1));
        let all_bad = [sample(0, f64::NAN, true), sample(1, f64::INFINITY, false)];
        assert_eq!(select_best(&all_bad, MetricKind::Loss), None);
    }

    #[test]
    fn draws_respect_bounds() {
        let spec = SearchSpec::default();
        let mut rng = RngStream::new(3);
        for _ in 0..2000 {
            let hp = sample_hyperparams(&spec, &mut rng).unwrap();
            assert!((1e-4..=1.0).contains(&hp.alpha));
            assert!(spec.nu_choices.contains(&hp.nu));
            assert_eq!(hp.rho, 0.9);
        }
    }

    #[test]
    fn adapting_to_kind() {
        let drawn = HyperParams { alpha: 0.1, nu: 0.6, rho: 0.9, ..HyperParams::default() };
        let base = HyperParams::default();
        let sgd = hyperparams_for(OptimizerKind::Sgd, &drawn, &base, 0.0).unwrap();
        assert_eq!((sgd.nu, sgd.rho), (1.0, 0.0));
        let mom = hyperparams_for(OptimizerKind::NlMomentum, &drawn, &base, 5e-4).unwrap();
        assert_eq!((mom.nu, mom.rho), (0.6, 0.9));
        assert!((mom.lambda - 0.1 * 5e-4 / 0.1).abs() < 1e-15);
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e-3, 1.0, 4);
        assert_eq!(v.len(), 4);
        assert!((v[0] - 1e-3).abs() < 1e-18 && (v[3] - 1.0).abs() < 1e-15);
        assert!((v[1] - 1e-2).abs() < 1e-15);
    }
}
