//! CSV tables and the sweep metadata sidecar.
//!
//! Floats are written with Rust's `Display`, which is the shortest decimal
//! string that parses back to the same `f64`.

use std::io::Write;

use serde::Serialize;

use crate::analysis::AggregateCell;
use crate::engine::{RunConfig, RunResult};
use crate::sweep::SweepSpec;

pub const METRICS_HEADER: [&str; 6] = [
    "run_id",
    "generation",
    "coop_count",
    "coop_fraction",
    "gen_cost",
    "cum_cost",
];

pub const SWEEP_HEADER: [&str; 7] = [
    "theta",
    "threshold",
    "mean_coop_fraction",
    "stderr_coop",
    "mean_total_cost",
    "stderr_cost",
    "n_replicates",
];

/// Bumped whenever a column is added, removed or reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

fn num(x: f64) -> String {
    format!("{x}")
}

/// One row per generation per run.
pub fn write_metrics<W: Write>(out: W, runs: &[(usize, &RunResult)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for (run_id, result) in runs {
        let z = result.population() as f64;
        for r in &result.records {
            w.write_record([
                run_id.to_string(),
                r.generation.to_string(),
                r.coop_count.to_string(),
                num(r.coop_count as f64 / z),
                num(r.generation_cost),
                num(r.cumulative_cost),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_row(cell: &AggregateCell) -> [String; 7] {
    [
        num(cell.theta),
        num(cell.threshold),
        num(cell.mean_coop_fraction),
        num(cell.stderr_coop),
        num(cell.mean_total_cost),
        num(cell.stderr_cost),
        cell.n_replicates.to_string(),
    ]
}

pub fn write_sweep<W: Write>(out: W, cells: &[AggregateCell]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for cell in cells {
        w.write_record(sweep_row(cell))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepMetadata {
    pub schema_version: u32,
    pub artifact_version: &'static str,
    /// `incomplete` until every cell has been written to the table.
    pub status: &'static str,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub label: String,
    pub config_digest: String,
    pub scheme_kind: &'static str,
    pub theta_values: Vec<f64>,
    pub threshold_values: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub seed_derivation: &'static str,
    pub base: RunConfig,
    pub columns: Vec<&'static str>,
    pub cost_units: &'static str,
    pub cells_total: usize,
    pub cells_done: usize,
}

impl SweepMetadata {
    pub fn new(spec: &SweepSpec, label: &str, config_digest: &str, started_unix: u64) -> Self {
        SweepMetadata {
            schema_version: SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION"),
            status: "incomplete",
            started_unix,
            finished_unix: None,
            label: label.to_string(),
            config_digest: config_digest.to_string(),
            scheme_kind: spec.scheme_kind.as_str(),
            theta_values: spec.theta_values.clone(),
            threshold_values: spec.threshold_values.clone(),
            replicates: spec.replicates,
            base_seed: spec.base_seed,
            seed_derivation: "derive_seed(base_seed, [theta.to_bits(), threshold.to_bits(), replicate])",
            base: spec.base.clone(),
            columns: SWEEP_HEADER.to_vec(),
            cost_units: "raw total investment per run; divide by 1e7 for the normalised heatmap scale",
            cells_total: spec.cells().len(),
            cells_done: 0,
        }
    }
}
