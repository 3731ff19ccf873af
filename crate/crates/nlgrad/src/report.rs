//! Summary tables over stored run records.

use std::fmt::Write as _;
use std::str::FromStr;

use nlgrad_core::optim::OptimizerKind;
use nlgrad_core::problems::MetricKind;
use nlgrad_core::train::{mean_std, RunRecord};

use crate::error::Error;

/// Conjunction of `key=value` clauses. Keys: `problem`, `optimizer` (or
/// `opt`), `label`, `nu`, `seed` and `flagged`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Filter {
    clauses: Vec<(String, String)>,
}

impl Filter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn parse_clauses<S: AsRef<str>>(clauses: &[S]) -> Result<Self, Error> {
        let mut f = Self::default();
        for c in clauses {
            f.clauses.extend(c.as_ref().parse::<Filter>()?.clauses);
        }
        Ok(f)
    }

    pub fn matches(&self, r: &RunRecord) -> bool {
        self.clauses.iter().all(|(k, v)| match k.as_str() {
            "problem" => r.problem == *v || r.config.problem.id() == v,
            "optimizer" | "opt" => v.parse::<OptimizerKind>().is_ok_and(|k| k == r.config.optimizer),
            "label" => r.config.label.as_deref() == Some(v.as_str()),
            "nu" => v.parse::<f64>().is_ok_and(|nu| nu == r.config.hyper.nu),
            "seed" => v.parse::<u64>().is_ok_and(|s| s == r.config.seed),
            "flagged" => v.parse::<bool>().is_ok_and(|f| f == r.flagged),
            _ => false,
        })
    }
}

const KEYS: [&str; 7] = ["problem", "optimizer", "opt", "label", "nu", "seed", "flagged"];

impl FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let mut clauses = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("filter clause {part:?} is not key=value")))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::invalid(format!("unknown filter key {k:?}; expected one of {}", KEYS.join(", "))));
            }
            clauses.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self { clauses })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub problem: String,
    pub optimizer: OptimizerKind,
    pub metric: MetricKind,
    /// In display units: percent for accuracy.
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub flagged: usize,
    pub nu: Option<f64>,
    pub one_minus_rho: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

pub const EMPTY_NOTICE: &str = "no matching records";

fn display_value(metric: MetricKind, v: f64) -> f64 {
    match metric {
        MetricKind::Accuracy => 100.0 * v,
        MetricKind::Loss => v,
    }
}

/// Group matching records by (problem, optimizer, ν, ρ) in order of first
/// appearance and summarize each group's final test metric.
pub fn summarize(records: &[RunRecord], filter: &Filter) -> SummaryTable {
    type Key = (String, OptimizerKind, u64, u64);
    let mut groups: Vec<(Key, Vec<&RunRecord>)> = Vec::new();
    for r in records.iter().filter(|r| filter.matches(r)) {
        let hp = &r.config.hyper;
        let key = (r.problem.clone(), r.config.optimizer, hp.nu.to_bits(), hp.rho.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let rows = groups
        .into_iter()
        .map(|((problem, optimizer, _, _), members)| {
            let metric = members[0].metric;
            let values: Vec<f64> = members.iter().map(|r| display_value(metric, r.final_test_metric())).collect();
            let (mean, std) = mean_std(&values);
            let hp = &members[0].config.hyper;
            SummaryRow {
                problem,
                optimizer,
                metric,
                mean,
                std,
                runs: members.len(),
                flagged: members.iter().filter(|r| r.flagged).count(),
                nu: optimizer.is_nl().then_some(hp.nu),
                one_minus_rho: optimizer.uses_momentum().then_some(1.0 - hp.rho),
            }
        })
        .collect();
    SummaryTable { rows }
}

/// Up to six decimals without trailing zeros.
fn short(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn metric_label(m: MetricKind) -> &'static str {
    match m {
        MetricKind::Loss => "test loss",
        MetricKind::Accuracy => "test accuracy (%)",
    }
}

impl SummaryTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn cells(&self) -> Vec<[String; 7]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.problem.clone(),
                    r.optimizer.to_string(),
                    metric_label(r.metric).to_string(),
                    format!("{:.2} ± {:.2}", r.mean, r.std),
                    r.nu.map_or_else(|| "-".into(), short),
                    r.one_minus_rho.map_or_else(|| "-".into(), short),
                    if r.flagged > 0 { format!("{} ({} flagged)", r.runs, r.flagged) } else { r.runs.to_string() },
                ]
            })
            .collect()
    }

    /// Aligned plain-text table, or [`EMPTY_NOTICE`].
    pub fn render_text(&self) -> String {
        if self.is_empty() {
            return format!("{EMPTY_NOTICE}\n");
        }
        let header = ["problem", "optimizer", "metric", "mean ± std", "ν", "1−ρ", "runs"].map(String::from);
        let body = self.cells();
        let mut widths = [0usize; 7];
        for row in std::iter::once(&header).chain(&body) {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |row: &[String; 7]| {
            let cells: Vec<String> = row
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        };
        line(&header);
        line(&widths.map(|w| "-".repeat(w)));
        for row in &body {
            line(row);
        }
        out
    }

    /// Tab-separated values with full-precision numbers.
    pub fn render_tsv(&self) -> String {
        let mut out = String::from("problem\toptimizer\tmetric\tmean\tstd\tnu\tone_minus_rho\truns\tflagged\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:?}"));
            writeln!(
                out,
                "{}\t{}\t{}\t{:?}\t{:?}\t{}\t{}\t{}\t{}",
                r.problem,
                r.optimizer,
                match r.metric {
                    MetricKind::Loss => "loss",
                    MetricKind::Accuracy => "accuracy_pct",
                },
                r.mean,
                r.std,
                opt(r.nu),
                opt(r.one_minus_rho),
                r.runs,
                r.flagged
            )
            .unwrap();
        }
        out
    }
}
