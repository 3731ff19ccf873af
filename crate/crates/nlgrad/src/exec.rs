//! Run execution on the host: image-backed problems, wall-clock timing and a
//! rayon-parallel [`Executor`].

use std::time::Instant;

use nlgrad_core::problems::MlpProblem;
use nlgrad_core::train::{run_training, train_objective, Executor, ProblemConfig, RunConfig, RunRecord};
use rayon::prelude::*;

use crate::image::read_image_set;

/// Train one configuration, resolving file-backed problems and recording
/// wall time.
pub fn run_config(cfg: &RunConfig) -> nlgrad_core::Result<RunRecord> {
    let start = Instant::now();
    let mut record = match &cfg.problem {
        ProblemConfig::ImageMlp { train_path, test_path, hidden, valid_fraction, split_seed } => {
            let train = read_image_set(train_path.as_ref())?;
            let test = read_image_set(test_path.as_ref())?;
            let problem = MlpProblem::new("image_mlp", hidden, train, test, *valid_fraction, *split_seed)?;
            train_objective(&problem, cfg)?
        }
        _ => run_training(cfg)?,
    };
    record.wall_time_secs = Some(start.elapsed().as_secs_f64());
    if let Some(reason) = &record.flag_reason {
        log::warn!("run with seed {} flagged: {reason}", cfg.seed);
    }
    Ok(record)
}

/// Runs configurations on a rayon pool; results keep input order.
#[derive(Debug, Default)]
pub struct Parallel {
    pool: Option<rayon::ThreadPool>,
}

impl Parallel {
    /// `threads = None` uses rayon's global pool.
    pub fn new(threads: Option<usize>) -> crate::Result<Self> {
        let pool = match threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| crate::Error::invalid(format!("thread pool: {e}")))?,
            ),
            None => None,
        };
        Ok(Self { pool })
    }
}

impl Executor for Parallel {
    fn run_all(&self, cfgs: &[RunConfig]) -> Vec<nlgrad_core::Result<RunRecord>> {
        let work = || cfgs.par_iter().map(run_config).collect();
        match &self.pool {
            Some(pool) => pool.install(work),
            None => work(),
        }
    }
}
