use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{Command, RunConfig};
use crate::error::{Error, Result};
use crate::report::write_table;

use super::{ensure_dir, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    /// `(key, value)` for every grid axis.
    pub assignments: Vec<(String, String)>,
    pub validation_metric: Option<f64>,
    pub test_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    /// Index into `cells` of the lowest validation metric.
    pub selected: usize,
    /// The selected cell retrained without a validation hold-out.
    pub refit: Option<RunSummary>,
}

impl SweepOutcome {
    pub fn selected_cell(&self) -> &SweepCell {
        &self.cells[self.selected]
    }

    pub fn summary(&self) -> RunSummary {
        let cell = self.selected_cell();
        RunSummary {
            validation_metric: cell.validation_metric,
            test_metric: self.refit.and_then(|r| r.test_metric).or(cell.test_metric),
        }
    }
}

/// Cartesian product of the grid axes; the last axis varies fastest.
fn grid_cells(grid: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    grid.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut cell = prefix.clone();
                    cell.push((key.clone(), v.clone()));
                    cell
                })
            })
            .collect()
    })
}

fn cell_config(base: &RunConfig, assignments: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = base.clone();
    cfg.sweep.grid.clear();
    for (k, v) in assignments {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Lowest validation metric wins; the earlier cell wins ties.
fn select(cells: &[SweepCell]) -> Option<usize> {
    cells
        .iter()
        .filter_map(|c| c.validation_metric.map(|v| (c.index, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs every grid cell of `sweep.command` (up to `sweep.jobs` at once),
/// each into `cell_NNN/`, selects by validation metric, optionally refits
/// the winner into `refit/`, and writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<SweepOutcome> {
    let command = cfg.sweep.command;
    if !matches!(command, Command::Synth | Command::Translate) {
        return Err(Error::Config(format!("sweep.command must be synth or translate, got {command}")));
    }
    let assignments = grid_cells(&cfg.sweep.grid);
    let configs = assignments
        .iter()
        .map(|a| cell_config(cfg, a))
        .collect::<Result<Vec<_>>>()?;
    let dirs: Vec<PathBuf> = (0..configs.len()).map(|i| out.join(format!("cell_{i:03}"))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} sweep jobs: {e}", cfg.sweep.jobs)))?;
    let results: Vec<Result<RunSummary>> = pool.install(|| {
        configs
            .par_iter()
            .zip(dirs.par_iter())
            .map(|(c, d)| super::run(command, c, d))
            .collect()
    });

    let mut cells = Vec::with_capacity(results.len());
    for (index, (result, assignment)) in results.into_iter().zip(assignments).enumerate() {
        let summary = result?;
        cells.push(SweepCell {
            index,
            assignments: assignment,
            validation_metric: summary.validation_metric,
            test_metric: summary.test_metric,
        });
    }
    let selected = select(&cells).ok_or_else(|| {
        Error::Config("no sweep cell produced a validation metric; set train.validation_fraction above 0".into())
    })?;

    let refit = if cfg.sweep.refit {
        let mut c = configs[selected].clone();
        c.train.validation_fraction = 0.0;
        let dir = out.join("refit");
        ensure_dir(&dir)?;
        Some(super::run(command, &c, &dir)?)
    } else {
        None
    };

    let mut columns: Vec<&str> = vec!["cell"];
    columns.extend(cfg.sweep.grid.iter().map(|(k, _)| k.as_str()));
    columns.extend(["validation_metric", "test_metric", "selected"]);
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let mut row = vec![c.index.to_string()];
            row.extend(c.assignments.iter().map(|(_, v)| v.clone()));
            row.push(fmt_opt(c.validation_metric));
            row.push(fmt_opt(c.test_metric));
            row.push((c.index == selected).to_string());
            row
        })
        .collect();
    let mut notes = vec![format!("selected_cell: {selected}")];
    if let Some(r) = refit {
        notes.push(format!("refit_test_metric: {}", fmt_opt(r.test_metric)));
    }
    write_table(&out.join("sweep.csv"), cfg, Command::Sweep, &notes, &columns, &rows)?;
    Ok(SweepOutcome { cells, selected, refit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_cartesian_in_order() {
        let grid = vec![
            ("a".to_string(), vec!["1".to_string(), "2".to_string()]),
            ("b".to_string(), vec!["x".to_string(), "y".to_string(), "z".to_string()]),
        ];
        let cells = grid_cells(&grid);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1], [("a".to_string(), "1".to_string()), ("b".to_string(), "y".to_string())]);
        assert_eq!(cells[3][0].1, "2");
        assert_eq!(grid_cells(&[]), vec![Vec::<(String, String)>::new()]);
    }

    #[test]
    fn selection_prefers_lowest_then_earliest() {
        let cell = |index, v| SweepCell {
            index,
            assignments: vec![],
            validation_metric: v,
            test_metric: None,
        };
        assert_eq!(select(&[cell(0, Some(2.0)), cell(1, Some(1.0)), cell(2, Some(1.0))]), Some(1));
        assert_eq!(select(&[cell(0, None), cell(1, Some(5.0))]), Some(1));
        assert_eq!(select(&[cell(0, None)]), None);
    }
}
