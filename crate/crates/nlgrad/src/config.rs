//! TOML configuration files.
//!
//! ```toml
//! [run]
//! optimizer = "nl-sgd"
//! epochs = 100
//! batch_size = 128
//! seed = 0
//!
//! [run.hyper]
//! alpha = 0.05
//! nu = 0.8
//!
//! [run.problem]
//! kind = "quadratic_deep"
//!
//! [search]
//! budget = 50
//!
//! [sweep]
//! nus = [0.5, 0.75, 1.0]
//! lr_min = 1e-3
//! lr_max = 1.0
//! lr_steps = 7
//! ```
//!
//! Every table and key is optional; omitted values keep their defaults.

use std::path::Path;

use nlgrad_core::optim::{HyperParams, OptimizerKind};
use nlgrad_core::problems::quadratic::QuadraticSpec;
use nlgrad_core::search::{log_space, SearchSpec};
use nlgrad_core::train::{ProblemConfig, RunConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub nus: Vec<f64>,
    /// Explicit learning rates; when empty, `lr_steps` log-spaced values
    /// from `lr_min` to `lr_max` are used.
    pub lrs: Vec<f64>,
    pub lr_min: f64,
    pub lr_max: f64,
    pub lr_steps: usize,
    pub seeds_per_cell: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            nus: vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            lrs: Vec::new(),
            lr_min: 1e-3,
            lr_max: 1.0,
            lr_steps: 10,
            seeds_per_cell: 5,
        }
    }
}

impl SweepSpec {
    pub fn learning_rates(&self) -> Vec<f64> {
        if self.lrs.is_empty() {
            log_space(self.lr_min, self.lr_max, self.lr_steps)
        } else {
            self.lrs.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FileConfig {
    pub run: RunConfig,
    pub search: SearchSpec,
    pub sweep: SweepSpec,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self { run: default_run(), search: SearchSpec::default(), sweep: SweepSpec::default() }
    }
}

pub fn default_run() -> RunConfig {
    RunConfig::new(
        ProblemConfig::QuadraticDeep(QuadraticSpec::default()),
        OptimizerKind::Sgd,
        HyperParams::default(),
    )
}

/// Overlay `patch` onto `base`. A `problem` table naming a different `kind`
/// replaces the base problem instead of merging into it.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let replace = k == "problem"
                    && b.get(&k).and_then(|old| old.get("kind")) != v.get("kind")
                    && v.get("kind").is_some();
                match b.get_mut(&k) {
                    Some(slot) if !replace => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn section<T: Serialize + for<'de> Deserialize<'de>>(default: T, patch: Option<Value>, name: &str) -> Result<T> {
    let Some(patch) = patch else { return Ok(default) };
    let mut value = serde_json::to_value(&default).map_err(|e| Error::invalid(e.to_string()))?;
    merge(&mut value, patch);
    serde_json::from_value(value).map_err(|e| Error::invalid(format!("[{name}]: {e}")))
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let root: Value = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
    let Value::Object(mut tables) = root else {
        return Err(Error::invalid("config: expected a table at top level"));
    };
    if let Some(unknown) = tables.keys().find(|k| !["run", "search", "sweep"].contains(&k.as_str())) {
        return Err(Error::invalid(format!("config: unknown table [{unknown}]")));
    }
    let defaults = FileConfig::default();
    Ok(FileConfig {
        run: section(defaults.run, tables.remove("run"), "run")?,
        search: section(defaults.search, tables.remove("search"), "search")?,
        sweep: section(defaults.sweep, tables.remove("sweep"), "sweep")?,
    })
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}
