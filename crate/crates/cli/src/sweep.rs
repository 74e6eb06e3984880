//! Cross-product sweeps over p, q, m and seed.
//!
//! Each cell is an independent run with its own output directory under
//! `cells/`. Cells run on a fixed-size worker pool; a failing cell is
//! recorded and the others carry on.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, LoadedData, Overrides};
use crate::run::{execute, verdict_label, Summary};

/// One point of the sweep grid. `None` keeps the base value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
}

/// Cells in row-major order over (p, q, m, seed).
pub fn cells(loaded: &LoadedConfig) -> Vec<Cell> {
    let sweep = loaded.config.sweep.clone().unwrap_or_default();
    fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
        if values.is_empty() {
            vec![None]
        } else {
            values.iter().copied().map(Some).collect()
        }
    }
    let mut out = Vec::new();
    for &p in &axis(&sweep.p) {
        for &q in &axis(&sweep.q) {
            for &m in &axis(&sweep.m) {
                for &seed in &axis(&sweep.seed) {
                    out.push(Cell {
                        index: out.len(),
                        p,
                        q,
                        m,
                        seed,
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn cell_config(loaded: &LoadedConfig, cell: &Cell) -> LoadedConfig {
    let mut out = loaded.clone();
    out.config.apply(&Overrides {
        p: cell.p,
        q: cell.q,
        m: cell.m,
        seed: cell.seed,
        ..Default::default()
    });
    out.config.sweep = None;
    out
}

/// Runs every cell and writes `sweep.jsonl` and `sweep.tsv` into the
/// output directory. Errors only on problems shared by all cells.
pub fn execute_sweep(loaded: &LoadedConfig, data: Option<&LoadedData>) -> Result<Vec<CellResult>> {
    let root = loaded.output_dir();
    std::fs::create_dir_all(&root).with_context(|| format!("cannot create {}", root.display()))?;
    let threads = loaded
        .config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;

    let grid = cells(loaded);
    let results: Vec<CellResult> = pool.install(|| {
        grid.par_iter()
            .map(|cell| {
                let dir = root.join("cells").join(format!("cell-{:03}", cell.index));
                let config = cell_config(loaded, cell);
                let outcome = catch_unwind(AssertUnwindSafe(|| execute(&config, data, &dir)))
                    .unwrap_or_else(|panic| {
                        Err(anyhow::anyhow!("cell panicked: {}", panic_message(&panic)))
                    });
                let (summary, error) = match outcome {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(format!("{e:#}"))),
                };
                CellResult {
                    cell: *cell,
                    output_dir: dir,
                    summary,
                    error,
                }
            })
            .collect()
    });

    write_jsonl(&root.join("sweep.jsonl"), &results)?;
    write_tsv(&root.join("sweep.tsv"), &results)?;
    Ok(results)
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    panic
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

fn write_jsonl(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn write_tsv(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    writeln!(out, "cell\tp\tq\tm\tseed\tstatus\tverdict\ttime_to_convergence\tpositive_usage\tnegative_usage\terror")?;
    for r in results {
        let (p, q, m, seed, status, verdict, ttc, pos, neg) = match &r.summary {
            Some(s) => (
                s.p.to_string(),
                s.q.to_string(),
                s.services.to_string(),
                s.seed.to_string(),
                "ok",
                verdict_label(&s.verdict),
                s.time_to_convergence
                    .map_or(String::new(), |t| t.to_string()),
                s.positive_usage().to_string(),
                s.negative_usage().to_string(),
            ),
            None => {
                let show = |v: Option<String>| v.unwrap_or_default();
                (
                    show(r.cell.p.map(|v| v.to_string())),
                    show(r.cell.q.map(|v| v.to_string())),
                    show(r.cell.m.map(|v| v.to_string())),
                    show(r.cell.seed.map(|v| v.to_string())),
                    "failed",
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                )
            }
        };
        let error = r.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ");
        writeln!(
            out,
            "{}\t{p}\t{q}\t{m}\t{seed}\t{status}\t{verdict}\t{ttc}\t{pos}\t{neg}\t{error}",
            r.cell.index
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{RunConfig, SweepConfig};

    fn loaded(sweep: SweepConfig) -> LoadedConfig {
        let mut config =
            RunConfig::parse("schema_version = 1\n[scenario]\nbuiltin = \"five_point\"\n").unwrap();
        config.sweep = Some(sweep);
        LoadedConfig {
            config,
            base_dir: PathBuf::new(),
        }
    }

    #[test]
    fn grid_is_the_cross_product() {
        let grid = cells(&loaded(SweepConfig {
            p: vec![0.1, 1.0],
            seed: vec![1, 2, 3],
            ..Default::default()
        }));
        assert_eq!(grid.len(), 6);
        assert_eq!(
            grid[0],
            Cell {
                index: 0,
                p: Some(0.1),
                q: None,
                m: None,
                seed: Some(1)
            }
        );
        assert_eq!(
            grid[5],
            Cell {
                index: 5,
                p: Some(1.0),
                q: None,
                m: None,
                seed: Some(3)
            }
        );
    }

    #[test]
    fn cell_config_overrides_and_drops_the_sweep() {
        let base = loaded(SweepConfig {
            q: vec![3.0],
            ..Default::default()
        });
        let cell = cells(&base)[0];
        let c = cell_config(&base, &cell);
        assert_eq!(c.config.dynamics.q, Some(3.0));
        assert!(c.config.sweep.is_none());
    }
}
