//! Cartesian (theta × threshold) sweeps with replicates per cell.
//!
//! Replicate `r` of the cell at `(theta, threshold)` runs with seed
//! `derive_seed(base_seed, [theta.to_bits(), threshold.to_bits(), r])`.
//! Seeds depend on cell values rather than positions, so adding or removing
//! a cell leaves every other cell's result unchanged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{aggregate, AggregateCell};
use crate::engine::{run, RunConfig};
use crate::error::ConfigError;
use crate::interference::InterferenceScheme;
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Pop,
    Neb,
    NebI,
    NebIi,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::Pop => "pop",
            SchemeKind::Neb => "neb",
            SchemeKind::NebI => "neb_i",
            SchemeKind::NebIi => "neb_ii",
        }
    }

    /// Whether the sweep has a theta axis. NEB-i and NEB-ii are driven by
    /// their margin alone, carried on the threshold axis.
    pub fn uses_theta(&self) -> bool {
        matches!(self, SchemeKind::Pop | SchemeKind::Neb)
    }

    pub fn scheme(&self, theta: f64, threshold: f64) -> InterferenceScheme {
        match self {
            SchemeKind::Pop => InterferenceScheme::Pop {
                p_c: threshold,
                theta,
            },
            SchemeKind::Neb => InterferenceScheme::Neb {
                n_c: threshold as u8,
                theta,
            },
            SchemeKind::NebI => InterferenceScheme::NebI { eps: threshold },
            SchemeKind::NebIi => InterferenceScheme::NebIi { eps: threshold },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Template; its scheme and seed are replaced per cell and replicate.
    pub base: RunConfig,
    pub scheme_kind: SchemeKind,
    /// Empty for NEB-i / NEB-ii; their cells report theta = 0.
    pub theta_values: Vec<f64>,
    /// p_c fractions (pop), n_c in 0..=4 (neb), or eps (neb_i, neb_ii).
    pub threshold_values: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
}

fn strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.base.validate()?;
        if self.replicates == 0 {
            return Err(ConfigError::new("protocol.replicates", "must be >= 1"));
        }
        if self.scheme_kind.uses_theta() {
            if self.theta_values.is_empty() {
                return Err(ConfigError::new("sweep.theta_values", "must not be empty"));
            }
            if let Some(t) = self.theta_values.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
                return Err(ConfigError::new(
                    "sweep.theta_values",
                    format!("theta = {t} must be finite and > 0"),
                ));
            }
            if !strictly_increasing(&self.theta_values) {
                return Err(ConfigError::new(
                    "sweep.theta_values",
                    "must be sorted ascending without duplicates",
                ));
            }
        } else if !self.theta_values.is_empty() {
            return Err(ConfigError::new(
                "sweep.theta_values",
                format!("{} sweeps take no theta values", self.scheme_kind.as_str()),
            ));
        }
        if self.threshold_values.is_empty() {
            return Err(ConfigError::new("sweep.threshold_values", "must not be empty"));
        }
        if !strictly_increasing(&self.threshold_values) {
            return Err(ConfigError::new(
                "sweep.threshold_values",
                "must be sorted ascending without duplicates",
            ));
        }
        for &h in &self.threshold_values {
            let ok = match self.scheme_kind {
                SchemeKind::Pop => (0.0..=1.0).contains(&h),
                SchemeKind::Neb => (0.0..=4.0).contains(&h) && h.fract() == 0.0,
                SchemeKind::NebI | SchemeKind::NebIi => h.is_finite() && h > 0.0,
            };
            if !ok {
                let expect = match self.scheme_kind {
                    SchemeKind::Pop => "a fraction in [0, 1]",
                    SchemeKind::Neb => "an integer in 0..=4",
                    _ => "a finite eps > 0",
                };
                return Err(ConfigError::new(
                    "sweep.threshold_values",
                    format!("{h} is not {expect}"),
                ));
            }
        }
        Ok(())
    }

    /// (theta, threshold) pairs in output order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let thetas: &[f64] = if self.scheme_kind.uses_theta() {
            &self.theta_values
        } else {
            &[0.0]
        };
        thetas
            .iter()
            .flat_map(|&t| self.threshold_values.iter().map(move |&h| (t, h)))
            .collect()
    }

    pub fn cell_seed(&self, theta: f64, threshold: f64, replicate: usize) -> u64 {
        derive_seed(
            self.base_seed,
            &[theta.to_bits(), threshold.to_bits(), replicate as u64],
        )
    }

    pub fn cell_config(&self, theta: f64, threshold: f64) -> RunConfig {
        self.base
            .clone()
            .with_scheme(self.scheme_kind.scheme(theta, threshold))
    }
}

/// Runs every cell; `on_cell` is called once per finished cell, possibly from
/// a worker thread and in completion order. The returned cells are ordered by
/// (theta, threshold).
pub fn run_sweep_with<F>(spec: &SweepSpec, on_cell: F) -> Result<Vec<AggregateCell>, ConfigError>
where
    F: Fn(&AggregateCell) + Sync,
{
    spec.validate()?;
    spec.cells()
        .into_par_iter()
        .map(|(theta, threshold)| {
            let config = spec.cell_config(theta, threshold);
            let runs = (0..spec.replicates)
                .into_par_iter()
                .map(|r| run(&config.clone().with_seed(spec.cell_seed(theta, threshold, r))))
                .collect::<Result<Vec<_>, _>>()?;
            let cell = aggregate(&runs, theta, threshold).expect("replicates >= 1");
            on_cell(&cell);
            Ok(cell)
        })
        .collect()
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<AggregateCell>, ConfigError> {
    run_sweep_with(spec, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::deterministic_template;
    use crate::engine::run;

    fn spec(kind: SchemeKind, thetas: Vec<f64>, thresholds: Vec<f64>) -> SweepSpec {
        SweepSpec {
            base: deterministic_template(20, 1.8).unwrap(),
            scheme_kind: kind,
            theta_values: thetas,
            threshold_values: thresholds,
            replicates: 2,
            base_seed: 3,
        }
    }

    #[test]
    fn single_cell_matches_engine() {
        let mut s = spec(SchemeKind::Neb, vec![5.3], vec![3.0]);
        s.replicates = 1;
        let cells = run_sweep(&s).unwrap();
        let direct = run(&s.cell_config(5.3, 3.0).with_seed(s.cell_seed(5.3, 3.0, 0))).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].mean_coop_fraction, direct.stationary_coop_fraction);
        assert_eq!(cells[0].mean_total_cost, direct.total_cost);
    }

    #[test]
    fn output_order_and_row_count() {
        let s = spec(SchemeKind::Pop, vec![1.0, 4.5], vec![0.5, 0.9, 1.0]);
        let cells = run_sweep(&s).unwrap();
        let coords: Vec<(f64, f64)> = cells.iter().map(|c| (c.theta, c.threshold)).collect();
        assert_eq!(coords, s.cells());
        assert_eq!(cells.len(), 6);
        assert_eq!(cells, run_sweep(&s).unwrap());
    }

    #[test]
    fn cells_are_independent() {
        let full = run_sweep(&spec(SchemeKind::Neb, vec![2.0, 5.3], vec![2.0, 3.0, 4.0])).unwrap();
        let part = run_sweep(&spec(SchemeKind::Neb, vec![5.3], vec![3.0])).unwrap();
        let same = full
            .iter()
            .find(|c| c.theta == 5.3 && c.threshold == 3.0)
            .unwrap();
        assert_eq!(same, &part[0]);
    }

    #[test]
    fn margin_sweeps_have_no_theta_axis() {
        let s = spec(SchemeKind::NebIi, vec![], vec![0.1, 0.5]);
        let cells = run_sweep(&s).unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|c| c.theta == 0.0));
        let bad = spec(SchemeKind::NebI, vec![1.0], vec![0.1]);
        assert_eq!(bad.validate().unwrap_err().field, "sweep.theta_values");
    }

    #[test]
    fn invalid_specs_rejected() {
        let field = |s: SweepSpec| s.validate().unwrap_err().field;
        assert_eq!(field(spec(SchemeKind::Pop, vec![], vec![0.5])), "sweep.theta_values");
        assert_eq!(field(spec(SchemeKind::Pop, vec![1.0, 1.0], vec![0.5])), "sweep.theta_values");
        assert_eq!(field(spec(SchemeKind::Pop, vec![-1.0], vec![0.5])), "sweep.theta_values");
        assert_eq!(field(spec(SchemeKind::Pop, vec![1.0], vec![])), "sweep.threshold_values");
        assert_eq!(field(spec(SchemeKind::Pop, vec![1.0], vec![1.5])), "sweep.threshold_values");
        assert_eq!(field(spec(SchemeKind::Neb, vec![1.0], vec![2.5])), "sweep.threshold_values");
        assert_eq!(field(spec(SchemeKind::Neb, vec![1.0], vec![5.0])), "sweep.threshold_values");
        assert_eq!(
            field(spec(SchemeKind::Neb, vec![1.0], vec![3.0, 3.0])),
            "sweep.threshold_values"
        );
        let mut s = spec(SchemeKind::Neb, vec![1.0], vec![3.0]);
        s.replicates = 0;
        assert_eq!(field(s), "protocol.replicates");
    }
}
