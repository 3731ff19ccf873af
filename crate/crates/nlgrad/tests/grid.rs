use std::path::Path;

use nlgrad::core::optim::{HyperParams, OptimizerKind};
use nlgrad::core::problems::{QuadraticSpec, ToySpec};
use nlgrad::core::search::grid_sweep;
use nlgrad::core::train::{ProblemConfig, RunConfig, Sequential};
use nlgrad::grid::{export_grid, parse_grid, read_grid, render_grid, write_grid, GridFile, FLAGGED};

fn base() -> RunConfig {
    let problem = ProblemConfig::ToySingle { spec: ToySpec::default(), init: [0.01, 0.0001] };
    RunConfig { epochs: 2, batch_size: 8, batches_per_epoch: 5, ..RunConfig::new(problem, OptimizerKind::NlSgd, HyperParams::default()) }
}

#[test]
fn export_is_byte_deterministic() {
    let nus = [0.5, 1.0];
    let lrs = [0.01, 0.1];
    let a = grid_sweep(&base(), OptimizerKind::NlSgd, &nus, &lrs, 2, &Sequential).unwrap();
    let b = grid_sweep(&base(), OptimizerKind::NlSgd, &nus, &lrs, 2, &Sequential).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
    write_grid(&a, &pa).unwrap();
    write_grid(&b, &pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());

    let parsed = read_grid(&pa).unwrap();
    assert_eq!(parsed, GridFile::from(&a));
}

#[test]
fn single_cell_file() {
    let g = grid_sweep(&base(), OptimizerKind::NlSgd, &[0.7], &[0.05], 1, &Sequential).unwrap();
    let text = export_grid(&g);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "nu\\lr\t0.05");
    let cells: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[0], "0.7");
    assert_eq!(cells[1].parse::<f64>().unwrap(), g.cells[0].mean.unwrap());
}

#[test]
fn diverged_cells_carry_the_sentinel() {
    let quad = RunConfig {
        epochs: 30,
        batches_per_epoch: 10,
        ..RunConfig::new(ProblemConfig::QuadraticDeep(QuadraticSpec::default()), OptimizerKind::Sgd, HyperParams::sgd(0.01))
    };
    let g = grid_sweep(&quad, OptimizerKind::Sgd, &[1.0], &[0.001, 1.0], 1, &Sequential).unwrap();
    assert!(!g.cell(0, 0).flagged);
    assert!(g.cell(0, 1).flagged);
    let text = export_grid(&g);
    assert!(text.contains(FLAGGED));
    let parsed = parse_grid(&text, Path::new("mem")).unwrap();
    assert_eq!(parsed.values[0][1], None);
    assert!(parsed.values[0][0].is_some());
}

#[test]
fn render_parse_round_trip() {
    let file = GridFile {
        nus: vec![0.4, 1.0],
        lrs: vec![1e-3, 0.1, 1.0],
        values: vec![vec![Some(0.91), None, Some(0.5)], vec![Some(1.0 / 3.0), Some(0.0), None]],
    };
    assert_eq!(parse_grid(&render_grid(&file), Path::new("mem")).unwrap(), file);
}

#[test]
fn ragged_rows_are_rejected() {
    let err = parse_grid("nu\\lr\t0.1\t1\n0.5\t0.3\n", Path::new("g.tsv")).unwrap_err();
    assert!(err.to_string().contains("g.tsv"));
}
