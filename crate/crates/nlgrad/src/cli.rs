//! Command-line interface.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlgrad_core::optim::{LookaheadConvention, OptimizerKind};
use nlgrad_core::problems::mlp::CorrelatedMlpSpec;
use nlgrad_core::problems::quadratic::QuadraticSpec;
use nlgrad_core::problems::toy::ToySpec;
use nlgrad_core::search::{grid_sweep, run_medium_search};
use nlgrad_core::snr::{node_snr, optimal_weights, snr_distance, NodeWeights, SnrInputs};
use nlgrad_core::train::{run_repeats, ProblemConfig, RunConfig, RunRecord, ScheduleKind};
use nlgrad_core::Tensor;

use crate::config::{load_config, FileConfig};
use crate::error::{Error, Result};
use crate::exec::{run_config, Parallel};
use crate::grid::write_grid;
use crate::report::{summarize, Filter};
use crate::store::{write_records, RecordStore, StoredItem};

#[derive(Debug, Parser)]
#[command(name = "nlgrad", version, about = "Signed-power gradient optimizers: training, search and reports")]
pub struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Record store directory; exported files go here unless a path is given.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for multi-run commands (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and store the record.
    Train(RunArgs),
    /// Train one configuration over several derived seeds.
    Repeats {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        n_seeds: usize,
        /// Leave flagged (diverged) runs out of the summary.
        #[arg(long)]
        exclude_flagged: bool,
    },
    /// Random hyperparameter search followed by repeats of the best sample.
    Search {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        final_repeats: Option<usize>,
    },
    /// Grid sweep over ν and the learning rate.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated ν values.
        #[arg(long, value_delimiter = ',')]
        nus: Option<Vec<f64>>,
        /// Comma-separated learning rates.
        #[arg(long, value_delimiter = ',')]
        lrs: Option<Vec<f64>>,
        #[arg(long)]
        seeds_per_cell: Option<usize>,
        /// Grid file path (default: <out>/grid-<problem>-<optimizer>.tsv).
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Train a toy model and write its path-weight trajectory.
    Toy(ToyArgs),
    /// Evaluate node SNR and the SNR-optimal weights.
    Snr(SnrArgs),
    /// Summarize stored records.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ProblemId {
    QuadraticDeep,
    CorrelatedMlp,
    ToySingle,
    ToyThree,
    ImageMlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    Annihilation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LookaheadArg {
    Standard,
    Inverted,
}

fn parse_kind(s: &str) -> std::result::Result<OptimizerKind, String> {
    s.parse().map_err(|e: nlgrad_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub problem: Option<ProblemId>,
    #[arg(long = "opt", value_parser = parse_kind)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Weight decay applied as `θ ← θ − λθ` each step.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Clipping threshold for clipped-sgd.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long, value_enum)]
    pub lookahead: Option<LookaheadArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long)]
    pub label: Option<String>,
    /// Training image set for `image_mlp`.
    #[arg(long)]
    pub train_images: Option<PathBuf>,
    /// Test image set for `image_mlp`.
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    /// Hidden layer widths for `image_mlp`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ToyModel {
    SingleNode,
    ThreeNode,
}

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    #[arg(long, value_enum, default_value = "three-node")]
    pub model: ToyModel,
    #[arg(long = "opt", value_parser = parse_kind, default_value = "sgd")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// Number of update steps.
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long = "batch", default_value_t = 32)]
    pub batch_size: usize,
    /// Three-node imbalance: w₂₁ = κw, w₂₂ = w/κ.
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    /// Three-node base weight w = w₁₁ = w₁₂.
    #[arg(long, default_value_t = 0.1)]
    pub w: f64,
    #[arg(long, default_value_t = 0.01)]
    pub v1: f64,
    #[arg(long, default_value_t = 0.0001)]
    pub v2: f64,
    /// Input mean and target.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Input noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Trajectory file (default: <out>/toy-<model>-<optimizer>-seed<seed>.tsv).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SnrArgs {
    /// Signal covariance, rows separated by `;`, entries by `,`.
    #[arg(long)]
    pub signal_cov: String,
    /// Per-input noise variances, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub noise: Vec<f64>,
    /// Activation rates; scales the noise term per input.
    #[arg(long, value_delimiter = ',')]
    pub act_rates: Option<Vec<f64>>,
    /// Weights to evaluate against the optimum.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Tsv,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// `key=value` clause (repeatable; keys: problem, optimizer, label, nu, seed, flagged).
    #[arg(long)]
    pub filter: Vec<String>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    /// Also write every stored grid to this directory.
    #[arg(long)]
    pub export_grids: Option<PathBuf>,
}

fn default_problem(id: ProblemId, args: &RunArgs) -> Result<ProblemConfig> {
    Ok(match id {
        ProblemId::QuadraticDeep => ProblemConfig::QuadraticDeep(QuadraticSpec::default()),
        ProblemId::CorrelatedMlp => ProblemConfig::CorrelatedMlp(CorrelatedMlpSpec::default()),
        ProblemId::ToySingle => ProblemConfig::ToySingle { spec: ToySpec::default(), init: [0.01, 0.0001] },
        ProblemId::ToyThree => ProblemConfig::ToyThree { spec: ToySpec::default(), w: 0.1, kappa: 0.5 },
        ProblemId::ImageMlp => {
            let (Some(train), Some(test)) = (&args.train_images, &args.test_images) else {
                return Err(Error::invalid("image_mlp needs --train-images and --test-images"));
            };
            ProblemConfig::ImageMlp {
                train_path: train.display().to_string(),
                test_path: test.display().to_string(),
                hidden: args.hidden.clone().unwrap_or_else(|| vec![64]),
                valid_fraction: 0.1,
                split_seed: 0,
            }
        }
    })
}

/// Apply command-line overrides to the configured run.
pub fn build_run(base: &RunConfig, args: &RunArgs, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = base.clone();
    if let Some(id) = args.problem {
        let wanted = id.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        if cfg.problem.id() != wanted || id == ProblemId::ImageMlp {
            cfg.problem = default_problem(id, args)?;
        }
    }
    if let ProblemConfig::ImageMlp { hidden, .. } = &mut cfg.problem {
        if let Some(h) = &args.hidden {
            *hidden = h.clone();
        }
    }
    if let Some(k) = args.optimizer {
        cfg.optimizer = k;
    }
    let hp = &mut cfg.hyper;
    if let Some(v) = args.lr {
        hp.alpha = v;
    }
    if let Some(v) = args.nu {
        hp.nu = v;
    }
    if let Some(v) = args.rho {
        hp.rho = v;
    }
    if let Some(v) = args.lambda {
        hp.lambda = v;
    }
    if let Some(v) = args.clip {
        hp.clip_t = Some(v);
    }
    if let Some(l) = args.lookahead {
        hp.lookahead = match l {
            LookaheadArg::Standard => LookaheadConvention::Standard,
            LookaheadArg::Inverted => LookaheadConvention::Inverted,
        };
    }
    if !cfg.optimizer.uses_momentum() && args.rho.is_none() {
        hp.rho = 0.0;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.batches_per_epoch {
        cfg.batches_per_epoch = v;
    }
    if let Some(s) = args.schedule {
        cfg.schedule = match s {
            ScheduleArg::Constant => ScheduleKind::Constant,
            ScheduleArg::Annihilation => ScheduleKind::Annihilation,
        };
    }
    if let Some(l) = &args.label {
        cfg.label = Some(l.clone());
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn describe(r: &RunRecord) -> String {
    let m = r.final_test_metric();
    let metric = match r.metric {
        nlgrad_core::problems::MetricKind::Loss => format!("test loss {m:.4}"),
        nlgrad_core::problems::MetricKind::Accuracy => format!("test accuracy {:.2}%", 100.0 * m),
    };
    let flag = if r.flagged { " [flagged]" } else { "" };
    format!("{} {} seed {}: {metric}{flag}", r.problem, r.config.optimizer, r.config.seed)
}

fn warn_flagged(records: &[RunRecord]) {
    let n = records.iter().filter(|r| r.flagged).count();
    if n > 0 {
        eprintln!("warning: {n} of {} runs diverged and were flagged", records.len());
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

/// Trajectory rows: step 0 is the initialization, step k follows update k.
pub fn render_trajectory(initial: [f64; 2], record: &RunRecord, labels: [&str; 2]) -> String {
    let mut out = format!("step\t{}\t{}\ttrain_loss\n", labels[0], labels[1]);
    writeln!(out, "0\t{:?}\t{:?}\t", initial[0], initial[1]).unwrap();
    let products = record.products.as_deref().unwrap_or_default();
    for (k, (p, e)) in products.iter().zip(&record.epochs).enumerate() {
        writeln!(out, "{}\t{:?}\t{:?}\t{:?}", k + 1, p[0], p[1], e.train_loss).unwrap();
    }
    out
}

fn parse_matrix(s: &str) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad matrix entry {t:?}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Ok(Tensor::from_rows(&refs)?)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run_snr(args: &SnrArgs) -> Result<String> {
    let cov = parse_matrix(&args.signal_cov)?;
    let inputs = match &args.act_rates {
        Some(act) => SnrInputs::with_activation(cov, args.noise.clone(), act.clone())?,
        None => SnrInputs::new(cov, args.noise.clone())?,
    };
    let best = optimal_weights(&inputs, 1.0)?;
    let mut out = String::new();
    writeln!(out, "optimal weights: {}", fmt_vec(&best.w)).unwrap();
    writeln!(out, "optimal snr: {:.6}", node_snr(&best, &inputs)?).unwrap();
    if let Some(w) = &args.weights {
        let w = NodeWeights::new(w.clone());
        writeln!(out, "snr: {:.6}", node_snr(&w, &inputs)?).unwrap();
        writeln!(out, "distance to optimum: {:.6}", snr_distance(&w, &best)?).unwrap();
    }
    Ok(out)
}

fn run_toy(args: &ToyArgs, cli: &Cli, base: &RunConfig) -> Result<(RunRecord, PathBuf)> {
    let spec = ToySpec { a: args.a, sigma: args.sigma, ..ToySpec::default() };
    let (problem, initial, labels, model) = match args.model {
        ToyModel::SingleNode => (
            ProblemConfig::ToySingle { spec, init: [args.v1, args.v2] },
            [args.v1, args.v2],
            ["v1", "v2"],
            "single-node",
        ),
        ToyModel::ThreeNode => (
            ProblemConfig::ToyThree { spec, w: args.w, kappa: args.kappa },
            [args.w * args.w, args.w * args.w],
            ["w11w12", "w21w22"],
            "three-node",
        ),
    };
    let mut cfg = RunConfig {
        problem,
        optimizer: args.optimizer,
        epochs: args.steps,
        batch_size: args.batch_size,
        batches_per_epoch: 1,
        eval_every: args.steps.max(1),
        seed: cli.seed.unwrap_or(base.seed),
        schedule: ScheduleKind::Constant,
        label: Some(format!("toy-{model}")),
        ..base.clone()
    };
    cfg.hyper.alpha = args.lr;
    cfg.hyper.nu = args.nu;
    cfg.hyper.rho = if args.optimizer.uses_momentum() { args.rho } else { 0.0 };
    let record = run_config(&cfg)?;
    let path = args.trajectory.clone().unwrap_or_else(|| {
        cli.out.join(format!("toy-{model}-{}-seed{}.tsv", args.optimizer, cfg.seed))
    });
    ensure_parent(&path)?;
    std::fs::write(&path, render_trajectory(initial, &record, labels)).map_err(|e| Error::io(&path, e))?;
    Ok((record, path))
}

fn execute(cli: &Cli) -> Result<String> {
    let file = match &cli.config {
        Some(p) => load_config(p)?,
        None => FileConfig::default(),
    };
    let executor = || Parallel::new(cli.threads);
    let mut out = String::new();
    match &cli.command {
        Command::Train(args) => {
            let cfg = build_run(&file.run, args, cli.seed)?;
            let record = run_config(&cfg)?;
            let key = RecordStore::open(&cli.out)?.append(&StoredItem::from(record.clone()))?;
            warn_flagged(std::slice::from_ref(&record));
            writeln!(out, "{}", describe(&record)).unwrap();
            writeln!(out, "stored {key} in {}", cli.out.display()).unwrap();
        }
        Command::Repeats { run, n_seeds, exclude_flagged } => {
            let cfg = build_run(&file.run, run, cli.seed)?;
            let result = run_repeats(&cfg, *n_seeds, *exclude_flagged, &executor()?)?;
            let mut store = RecordStore::open(&cli.out)?;
            write_records(&mut store, &result.records)?;
            warn_flagged(&result.records);
            let s = &result.summary;
            writeln!(out, "{} x{}: {:.4} ± {:.4} (final test {:?})", cfg.optimizer, s.n, s.mean, s.std, s.metric).unwrap();
        }
        Command::Search { run, budget, final_repeats } => {
            let cfg = build_run(&file.run, run, None)?;
            let mut spec = file.search.clone();
            if let Some(b) = budget {
                spec.budget = *b;
            }
            if let Some(f) = final_repeats {
                spec.final_repeats = *f;
            }
            let master = cli.seed.unwrap_or(cfg.seed);
            let result = run_medium_search(&cfg, cfg.optimizer, &spec, master, &executor()?)?;
            let mut store = RecordStore::open(&cli.out)?;
            write_records(&mut store, &result.final_records)?;
            let key = store.append(&StoredItem::from(result.clone()))?;
            match (result.best_sample(), &result.summary) {
                (Some(best), Some(s)) => {
                    warn_flagged(&result.final_records);
                    writeln!(
                        out,
                        "best sample {} of {}: lr {:.6}, nu {}; final {} seeds: {:.4} ± {:.4}",
                        best.index,
                        result.samples.len(),
                        best.hyper.alpha,
                        best.hyper.nu,
                        s.n,
                        s.mean,
                        s.std
                    )
                    .unwrap();
                }
                _ => {
                    eprintln!("warning: search failed: all {} samples diverged", result.samples.len());
                    writeln!(out, "search failed: every sample diverged").unwrap();
                }
            }
            writeln!(out, "stored {key} in {}", cli.out.display()).unwrap();
        }
        Command::Sweep { run, nus, lrs, seeds_per_cell, grid } => {
            let cfg = build_run(&file.run, run, cli.seed)?;
            let mut sweep = file.sweep.clone();
            if let Some(n) = nus {
                sweep.nus = n.clone();
            }
            if let Some(l) = lrs {
                sweep.lrs = l.clone();
            }
            if let Some(s) = seeds_per_cell {
                sweep.seeds_per_cell = *s;
            }
            let result = grid_sweep(&cfg, cfg.optimizer, &sweep.nus, &sweep.learning_rates(), sweep.seeds_per_cell, &executor()?)?;
            let path = grid.clone().unwrap_or_else(|| {
                cli.out.join(format!("grid-{}-{}.tsv", result.problem, result.optimizer))
            });
            write_grid(&result, &path)?;
            RecordStore::open(&cli.out)?.append(&StoredItem::from(result.clone()))?;
            let flagged = result.cells.iter().filter(|c| c.flagged).count();
            if flagged > 0 {
                eprintln!("warning: {flagged} grid cells diverged and were flagged");
            }
            if let Some(best) = result.best_cell() {
                writeln!(out, "best cell: nu {}, lr {:.6}, mean {:.4}", best.nu, best.lr, best.mean.unwrap_or(f64::NAN)).unwrap();
            }
            writeln!(out, "grid written to {}", path.display()).unwrap();
        }
        Command::Toy(args) => {
            let (record, path) = run_toy(args, cli, &file.run)?;
            RecordStore::open(&cli.out)?.append(&StoredItem::from(record.clone()))?;
            warn_flagged(std::slice::from_ref(&record));
            writeln!(out, "{}", describe(&record)).unwrap();
            writeln!(out, "trajectory written to {}", path.display()).unwrap();
        }
        Command::Snr(args) => out = run_snr(args)?,
        Command::Report(args) => {
            let filter = Filter::parse_clauses(&args.filter)?;
            let store = RecordStore::open(&cli.out)?;
            let table = summarize(&store.runs()?, &filter);
            out = match args.format {
                ReportFormat::Text => table.render_text(),
                ReportFormat::Tsv => table.render_tsv(),
            };
            if let Some(dir) = &args.export_grids {
                for (key, g) in store.grids()? {
                    let path = dir.join(format!("grid-{}-{}-{}.tsv", g.problem, g.optimizer, &key[..12]));
                    write_grid(&g, &path)?;
                }
            }
        }
    }
    Ok(out)
}

/// Run the CLI on `args` (including the program name). Returns the process
/// exit code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
