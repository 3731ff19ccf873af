//! Tab-separated grid files: a header row of learning rates, then one row per
//! ν with the mean validation metric of each cell. Cells flagged as diverged
//! hold [`FLAGGED`] instead of a number.

use std::fmt::Write as _;
use std::path::Path;

use nlgrad_core::search::Grid;

use crate::error::{Error, Result};

pub const FLAGGED: &str = "DIVERGED";
const CORNER: &str = "nu\\lr";

/// Contents of a grid file. `values[i][j]` belongs to `(nus[i], lrs[j])`;
/// `None` marks a flagged cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFile {
    pub nus: Vec<f64>,
    pub lrs: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl From<&Grid> for GridFile {
    fn from(g: &Grid) -> Self {
        let values = (0..g.nus.len())
            .map(|i| (0..g.lrs.len()).map(|j| g.cell(i, j).mean).collect())
            .collect();
        Self { nus: g.nus.clone(), lrs: g.lrs.clone(), values }
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

pub fn render_grid(file: &GridFile) -> String {
    let mut out = String::from(CORNER);
    for lr in &file.lrs {
        write!(out, "\t{}", fmt_value(*lr)).unwrap();
    }
    out.push('\n');
    for (nu, row) in file.nus.iter().zip(&file.values) {
        out.push_str(&fmt_value(*nu));
        for v in row {
            match v {
                Some(v) => write!(out, "\t{}", fmt_value(*v)).unwrap(),
                None => write!(out, "\t{FLAGGED}").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

pub fn export_grid(grid: &Grid) -> String {
    render_grid(&GridFile::from(grid))
}

pub fn write_grid(grid: &Grid, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, export_grid(grid)).map_err(|e| Error::io(path, e))
}

fn parse_num(tok: &str, path: &Path, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("expected a number, found {tok:?}"),
    })
}

/// Parse grid text; `path` is only used in error messages.
pub fn parse_grid(text: &str, path: &Path) -> Result<GridFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "empty grid file".into(),
    })?;
    let mut cols = header.split('\t');
    cols.next();
    let lrs = cols.map(|t| parse_num(t, path, 1)).collect::<Result<Vec<_>>>()?;
    let mut nus = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let mut cells = line.split('\t');
        nus.push(parse_num(cells.next().unwrap_or_default(), path, i + 1)?);
        let row = cells
            .map(|t| if t == FLAGGED { Ok(None) } else { parse_num(t, path, i + 1).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != lrs.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {} cells, found {}", lrs.len(), row.len()),
            });
        }
        values.push(row);
    }
    Ok(GridFile { nus, lrs, values })
}

pub fn read_grid(path: &Path) -> Result<GridFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_grid(&text, path)
}
