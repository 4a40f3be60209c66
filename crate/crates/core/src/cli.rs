//! Command implementations behind the `latticepd` binary.
//!
//! Every command writes its user-facing text to the `out` writer it is given,
//! and progress to stderr. Exit codes: 0 success, 1 verification failure,
//! 2 configuration error, 3 I/O error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::analysis::{verify_thresholds, AnalysisError};
use crate::config::{ConfigFileError, ExperimentConfig};
use crate::engine::{run_replicates, RunResult};
use crate::error::ConfigError;
use crate::grid::Grid;
use crate::output::{self, SweepMetadata};
use crate::sweep::run_sweep_with;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Csv(_) => 3,
        }
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        match e {
            ConfigFileError::Io(e) => CliError::Io(e),
            ConfigFileError::Invalid(e) => CliError::Config(e),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Config(c) => CliError::Config(c),
            AnalysisError::Temptation(b) => CliError::Config(ConfigError::new(
                "b",
                format!("{b} is outside (1, 2]"),
            )),
            other => CliError::Config(ConfigError::new("analysis", other)),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = overrides.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Runs `f` on a pool with `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Config(ConfigError::new("--workers", "must be >= 1"))),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(io::Error::other(e)))?;
            Ok(pool.install(f))
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn summary_line(run_id: usize, r: &RunResult) -> String {
    let mut line = format!(
        "run={run_id} seed={} stationary_coop={} total_cost={} termination={} executed_generations={}",
        r.seed,
        r.stationary_coop_fraction,
        r.total_cost,
        r.termination.as_str(),
        r.executed_generations
    );
    if let Some(p) = r.cycle_period {
        line.push_str(&format!(" cycle_period={p}"));
    }
    line
}

fn write_summary_csv(path: &Path, results: &[RunResult]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "run_id",
        "seed",
        "stationary_coop_fraction",
        "total_cost",
        "termination",
        "cycle_period",
        "executed_generations",
    ])?;
    for (i, r) in results.iter().enumerate() {
        w.write_record([
            i.to_string(),
            r.seed.to_string(),
            format!("{}", r.stationary_coop_fraction),
            format!("{}", r.total_cost),
            r.termination.as_str().to_string(),
            r.cycle_period.map(|p| p.to_string()).unwrap_or_default(),
            r.executed_generations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `run`: replicates of one configuration. Writes `config.toml`,
/// `metrics.csv`, `summary.csv` and `final_<run>.txt` into the run directory
/// and one summary line per replicate to `out`. Returns the run directory.
pub fn cmd_run(
    config_path: &Path,
    overrides: &Overrides,
    out: &mut dyn Write,
) -> Result<PathBuf, CliError> {
    let cfg = load_config(config_path, overrides)?;
    let run_config = cfg.run_config()?;
    let results = with_workers(overrides.workers, || {
        run_replicates(&run_config, cfg.replicates, cfg.base_seed)
    })??;

    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let indexed: Vec<(usize, &RunResult)> = results.iter().enumerate().collect();
    output::write_metrics(BufWriter::new(File::create(dir.join("metrics.csv"))?), &indexed)?;
    write_summary_csv(&dir.join("summary.csv"), &results)?;
    for (i, r) in results.iter().enumerate() {
        fs::write(dir.join(format!("final_{i}.txt")), r.final_grid.to_snapshot())?;
    }

    for (i, r) in results.iter().enumerate() {
        writeln!(out, "{}", summary_line(i, r))?;
    }
    if results.len() > 1 {
        let cell = crate::analysis::aggregate(&results, 0.0, 0.0)?;
        writeln!(
            out,
            "mean stationary_coop={} (stderr {}) mean total_cost={} (stderr {}) replicates={}",
            cell.mean_coop_fraction,
            cell.stderr_coop,
            cell.mean_total_cost,
            cell.stderr_cost,
            cell.n_replicates
        )?;
    }
    writeln!(out, "output: {}", dir.display())?;
    Ok(dir)
}

/// `sweep`: one aggregate row per (theta, threshold) cell.
///
/// While running, `sweep.meta.json` has `"status": "incomplete"` and
/// finished cells are appended to `sweep.partial.csv` in completion order.
/// On success the ordered table is written to `sweep.csv`, the partial file
/// is removed and the metadata is marked `complete`.
pub fn cmd_sweep(
    config_path: &Path,
    overrides: &Overrides,
    out: &mut dyn Write,
) -> Result<PathBuf, CliError> {
    let cfg = load_config(config_path, overrides)?;
    let spec = cfg.sweep_spec()?;
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let mut meta = SweepMetadata::new(&spec, &cfg.label, &cfg.digest(), unix_now());
    let meta_path = dir.join("sweep.meta.json");
    let write_meta = |m: &SweepMetadata| -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(m).map_err(io::Error::other)?;
        fs::write(&meta_path, text + "\n")?;
        Ok(())
    };
    write_meta(&meta)?;

    let partial_path = dir.join("sweep.partial.csv");
    let mut partial = csv::Writer::from_path(&partial_path)?;
    partial.write_record(output::SWEEP_HEADER)?;
    partial.flush()?;
    let partial = Mutex::new(partial);
    let done = AtomicUsize::new(0);
    let total = meta.cells_total;

    let cells = with_workers(overrides.workers, || {
        run_sweep_with(&spec, |cell| {
            let n = done.fetch_add(1, Ordering::SeqCst) + 1;
            if let Ok(mut w) = partial.lock() {
                // best effort; the ordered table is written at the end
                let _ = w.write_record(output::sweep_row(cell));
                let _ = w.flush();
            }
            eprintln!(
                "[{n}/{total}] theta={} threshold={} coop={:.4} cost={:.4e}",
                cell.theta, cell.threshold, cell.mean_coop_fraction, cell.mean_total_cost
            );
        })
    })??;

    output::write_sweep(BufWriter::new(File::create(dir.join("sweep.csv"))?), &cells)?;
    drop(partial);
    fs::remove_file(&partial_path)?;
    meta.status = "complete";
    meta.cells_done = cells.len();
    meta.finished_unix = Some(unix_now());
    write_meta(&meta)?;

    writeln!(out, "{} cells written to {}", cells.len(), dir.join("sweep.csv").display())?;
    Ok(dir)
}

/// `verify`: prints the closed-form thresholds for each `b` and checks the
/// simulated lone-defector outcome at `points` theta values.
/// Returns `Err(Verification)` listing every contradiction.
pub fn cmd_verify(b_values: &[f64], points: usize, out: &mut dyn Write) -> Result<(), CliError> {
    if b_values.is_empty() {
        return Err(CliError::Config(ConfigError::new("--b", "no values given")));
    }
    let mut failures = Vec::new();
    for &b in b_values {
        let report = verify_thresholds(b, points)?;
        let t = report.thresholds;
        writeln!(
            out,
            "b={b}: pop_escape theta>{} stable_band=({}, {}] neb3_escape theta>={} | checked={} skipped={} mismatches={}",
            t.pop_escape_threshold,
            t.pop_stable_band.0,
            t.pop_stable_band.1,
            t.neb3_escape_threshold,
            report.checked,
            report.skipped,
            report.mismatches.len()
        )?;
        for m in &report.mismatches {
            let line = format!(
                "  mismatch b={} theta={} scheme={} expected={} observed={}",
                m.b,
                m.theta,
                m.scheme,
                m.expected.as_str(),
                m.observed.as_str()
            );
            writeln!(out, "{line}")?;
            failures.push(line.trim().to_string());
        }
    }
    if failures.is_empty() {
        writeln!(out, "all microscopic checks agree with the closed form")?;
        Ok(())
    } else {
        Err(CliError::Verification(failures.join("\n")))
    }
}

/// `snapshot`: parses a stored grid and writes it back out in canonical form.
pub fn cmd_snapshot(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(path)?;
    let grid = Grid::parse_snapshot(&text)
        .map_err(|e| CliError::Config(ConfigError::new(path.display().to_string(), e)))?;
    out.write_all(grid.to_snapshot().as_bytes())?;
    Ok(())
}
