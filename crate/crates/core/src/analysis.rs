//! Closed-form investment thresholds, the lone-defector one-step check, and
//! replicate aggregation.
//!
//! For a lone defector in a sea of cooperators with every cooperator paid
//! `theta` (POP with `p_c = 1`, or NEB with `n_c = 4`):
//!
//! - the defector scores `4b`, its cooperating neighbours `3 + theta`, and
//!   the cooperators next to those `4 + theta`;
//! - `theta > 4b - 3`: the defector imitates a cooperator;
//! - `4b - 4 < theta <= 4b - 3`: nobody changes;
//! - `theta < 4b - 4`: the neighbouring cooperators imitate the defector.
//!
//! NEB with `n_c = 3` escapes its cyclic patterns once `theta >= 4b - 2`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{step_deterministic, UpdateRule};
use crate::engine::{run_replicates, RunConfig, RunResult};
use crate::error::ConfigError;
use crate::game::{compute_scores, PayoffParams};
use crate::grid::{Grid, C, D};
use crate::interference::InterferenceScheme;

/// Side of the lattice used for the one-step check; large enough that the
/// defector's second shell does not wrap onto itself.
const MICRO_SIDE: usize = 7;

/// Distance from a regime boundary below which a theta value is treated as
/// on the boundary and skipped by the sweep check.
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("temptation b = {0} must satisfy 1 < b <= 2")]
    Temptation(f64),
    #[error("cannot aggregate an empty set of runs")]
    Empty,
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub b: f64,
    /// POP / NEB-4 escape: theta > 4b - 3.
    pub pop_escape_threshold: f64,
    /// Stable lone-defector band (4b - 4, 4b - 3].
    pub pop_stable_band: (f64, f64),
    /// NEB-3 escape: theta >= 4b - 2.
    pub neb3_escape_threshold: f64,
}

pub fn thresholds(b: f64) -> Result<ThresholdReport, AnalysisError> {
    if !(b > 1.0 && b <= 2.0) {
        return Err(AnalysisError::Temptation(b));
    }
    Ok(ThresholdReport {
        b,
        pop_escape_threshold: 4.0 * b - 3.0,
        pop_stable_band: (4.0 * b - 4.0, 4.0 * b - 3.0),
        neb3_escape_threshold: 4.0 * b - 2.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum MicroOutcome {
    /// The defector imitates a cooperator.
    DConverts,
    /// No agent changes strategy.
    Stable,
    /// Cooperators next to the defector imitate it.
    CConverts,
    /// Anything else, e.g. changes away from the defector.
    Other,
}

impl MicroOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            MicroOutcome::DConverts => "D_converts",
            MicroOutcome::Stable => "stable",
            MicroOutcome::CConverts => "C_converts",
            MicroOutcome::Other => "other",
        }
    }
}

/// Predicted one-step outcome when every cooperator receives `theta`.
/// `None` exactly at `theta = 4b - 4`, where the outcome depends on tie-breaking.
pub fn closed_form_outcome(b: f64, theta: f64) -> Option<MicroOutcome> {
    let low = 4.0 * b - 4.0;
    let high = 4.0 * b - 3.0;
    if theta > high {
        Some(MicroOutcome::DConverts)
    } else if theta > low {
        Some(MicroOutcome::Stable)
    } else if theta < low {
        Some(MicroOutcome::CConverts)
    } else {
        None
    }
}

/// A single defector in the middle of an all-cooperator lattice.
pub fn lone_defector_grid(side: usize) -> (Grid, usize) {
    let mut g = Grid::filled(side, C).expect("side >= 3");
    let d = g.index(side / 2, side / 2);
    g.set(d, D);
    (g, d)
}

/// Plays one deterministic generation from the lone-defector configuration
/// under `scheme` and classifies what happened.
pub fn microscopic_check(
    b: f64,
    scheme: &InterferenceScheme,
) -> Result<MicroOutcome, AnalysisError> {
    let payoff = PayoffParams::weak(b).map_err(|_| AnalysisError::Temptation(b))?;
    scheme
        .validate()
        .map_err(|e| ConfigError::new("scheme", e))?;
    let (grid, d) = lone_defector_grid(MICRO_SIDE);
    let mut scores = compute_scores(&grid, &payoff);
    let investment = scheme.apply(&grid, &scores);
    scores.add_surplus(&investment.surplus);
    let next = step_deterministic(&grid, &scores);

    let d_flipped = next.get(d) == C;
    let lost_cooperators = (0..grid.len())
        .filter(|&i| grid.get(i) == C && next.get(i) == D)
        .count();
    Ok(match (d_flipped, lost_cooperators) {
        (true, 0) => MicroOutcome::DConverts,
        (false, 0) => MicroOutcome::Stable,
        (false, n) if n > 0 && lost_cooperators_adjacent(&grid, &next, d) => {
            MicroOutcome::CConverts
        }
        _ => MicroOutcome::Other,
    })
}

fn lost_cooperators_adjacent(before: &Grid, after: &Grid, d: usize) -> bool {
    let shell = before.neighbours(d);
    (0..before.len())
        .filter(|&i| before.get(i) == C && after.get(i) == D)
        .all(|i| shell.contains(&i))
}

/// `n` theta values evenly inside (4b - 5, 4b - 1), excluding both ends:
/// `4b - 5 + 4 (k + 1) / (n + 1)` for `k` in `0..n`.
pub fn theta_grid(b: f64, n: usize) -> Vec<f64> {
    let lo = 4.0 * b - 5.0;
    (0..n)
        .map(|k| lo + 4.0 * (k + 1) as f64 / (n + 1) as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    pub b: f64,
    pub theta: f64,
    pub scheme: &'static str,
    pub expected: MicroOutcome,
    pub observed: MicroOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub thresholds: ThresholdReport,
    /// Theta points actually compared (positive and off the boundaries).
    pub checked: usize,
    pub skipped: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares simulated lone-defector outcomes against [`closed_form_outcome`]
/// for POP (`p_c = 1`) and NEB (`n_c = 4`) over `n_theta` points of [`theta_grid`].
pub fn verify_thresholds(b: f64, n_theta: usize) -> Result<VerifyReport, AnalysisError> {
    let report = thresholds(b)?;
    let boundaries = [report.pop_stable_band.0, report.pop_stable_band.1];
    let mut checked = 0;
    let mut skipped = 0;
    let mut mismatches = Vec::new();
    for theta in theta_grid(b, n_theta) {
        let on_boundary = boundaries.iter().any(|x| (theta - x).abs() < BOUNDARY_TOL);
        let expected = match closed_form_outcome(b, theta) {
            Some(e) if theta > 0.0 && !on_boundary => e,
            _ => {
                skipped += 1;
                continue;
            }
        };
        let schemes = [
            InterferenceScheme::pop(1.0, theta).expect("theta > 0"),
            InterferenceScheme::neb(4, theta).expect("theta > 0"),
        ];
        for scheme in schemes {
            let observed = microscopic_check(b, &scheme)?;
            checked += 1;
            if observed != expected {
                mismatches.push(Mismatch {
                    b,
                    theta,
                    scheme: scheme.kind(),
                    expected,
                    observed,
                });
            }
        }
    }
    Ok(VerifyReport {
        thresholds: report,
        checked,
        skipped,
        mismatches,
    })
}

/// Replicate summary for one (theta, threshold) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub theta: f64,
    pub threshold: f64,
    pub mean_coop_fraction: f64,
    pub mean_total_cost: f64,
    pub stderr_coop: f64,
    pub stderr_cost: f64,
    pub n_replicates: usize,
}

/// Sample mean and standard error (unbiased sd / sqrt(n); 0 for n = 1).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(
    results: &[RunResult],
    theta: f64,
    threshold: f64,
) -> Result<AggregateCell, AnalysisError> {
    if results.is_empty() {
        return Err(AnalysisError::Empty);
    }
    // summing in sorted order keeps the result independent of input order
    let mut coop: Vec<f64> = results.iter().map(|r| r.stationary_coop_fraction).collect();
    let mut cost: Vec<f64> = results.iter().map(|r| r.total_cost).collect();
    coop.sort_by(f64::total_cmp);
    cost.sort_by(f64::total_cmp);
    let (mean_coop_fraction, stderr_coop) = mean_stderr(&coop);
    let (mean_total_cost, stderr_cost) = mean_stderr(&cost);
    Ok(AggregateCell {
        theta,
        threshold,
        mean_coop_fraction,
        mean_total_cost,
        stderr_coop,
        stderr_cost,
        n_replicates: results.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub label: String,
    pub mean_total_cost: f64,
    pub stderr_cost: f64,
    pub mean_coop_fraction: f64,
}

/// Mean total cost per labelled configuration over `n` replicates each.
pub fn cost_comparison(
    configs: &[(String, RunConfig)],
    n: usize,
    base_seed: u64,
) -> Result<Vec<CostRow>, AnalysisError> {
    let mut seen = HashSet::new();
    for (label, _) in configs {
        if !seen.insert(label.as_str()) {
            return Err(AnalysisError::DuplicateLabel(label.clone()));
        }
    }
    configs
        .iter()
        .map(|(label, cfg)| {
            let runs = run_replicates(cfg, n, base_seed)?;
            let cell = aggregate(&runs, 0.0, 0.0)?;
            Ok(CostRow {
                label: label.clone(),
                mean_total_cost: cell.mean_total_cost,
                stderr_cost: cell.stderr_cost,
                mean_coop_fraction: cell.mean_coop_fraction,
            })
        })
        .collect()
}

/// The four strategies compared at margin `eps` above their escape
/// thresholds: NEB-3 at `(4b - 2) + eps`, NEB-4 at `(4b - 3) + eps`, and
/// NEB-i / NEB-ii with `eps`. All other settings come from `template`.
pub fn neb_margin_configs(
    template: &RunConfig,
    eps: f64,
) -> Result<Vec<(String, RunConfig)>, AnalysisError> {
    let b = template.payoff.temptation();
    let t = thresholds(b)?;
    let scheme = |s: Result<InterferenceScheme, _>| {
        s.map_err(|e| AnalysisError::Config(ConfigError::new("scheme", e)))
    };
    Ok(vec![
        (
            "NEB-3".to_string(),
            template
                .clone()
                .with_scheme(scheme(InterferenceScheme::neb(3, t.neb3_escape_threshold + eps))?),
        ),
        (
            "NEB-4".to_string(),
            template
                .clone()
                .with_scheme(scheme(InterferenceScheme::neb(4, t.pop_escape_threshold + eps))?),
        ),
        (
            "NEB-i".to_string(),
            template.clone().with_scheme(scheme(InterferenceScheme::neb_i(eps))?),
        ),
        (
            "NEB-ii".to_string(),
            template.clone().with_scheme(scheme(InterferenceScheme::neb_ii(eps))?),
        ),
    ])
}

/// Deterministic-rule template at `b` on an `side × side` lattice.
pub fn deterministic_template(side: usize, b: f64) -> Result<RunConfig, AnalysisError> {
    let payoff = PayoffParams::weak(b).map_err(|_| AnalysisError::Temptation(b))?;
    Ok(RunConfig::new(
        side,
        payoff,
        InterferenceScheme::None,
        UpdateRule::Deterministic,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Termination;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn thresholds_at_reference_b() {
        let t = thresholds(1.8).unwrap();
        assert!(approx(t.pop_escape_threshold, 4.2));
        assert!(approx(t.neb3_escape_threshold, 5.2));
        assert!(approx(t.pop_stable_band.0, 3.2));
        assert!(approx(t.pop_stable_band.1, 4.2));
        let t = thresholds(2.0).unwrap();
        assert_eq!(
            (t.pop_stable_band.0, t.pop_escape_threshold, t.neb3_escape_threshold),
            (4.0, 5.0, 6.0)
        );
        let t = thresholds(1.0 + 1e-12).unwrap();
        assert!(t.pop_stable_band.0.abs() < 1e-9);
        assert!((t.pop_escape_threshold - 1.0).abs() < 1e-9);
        assert!((t.neb3_escape_threshold - 2.0).abs() < 1e-9);
    }

    #[test]
    fn thresholds_reject_bad_b() {
        assert_eq!(thresholds(0.9), Err(AnalysisError::Temptation(0.9)));
        assert_eq!(thresholds(1.0), Err(AnalysisError::Temptation(1.0)));
        assert!(thresholds(2.01).is_err());
    }

    #[test]
    fn lone_defector_regimes() {
        let pop = |t| InterferenceScheme::pop(1.0, t).unwrap();
        assert_eq!(microscopic_check(1.8, &pop(4.3)).unwrap(), MicroOutcome::DConverts);
        assert_eq!(microscopic_check(1.8, &pop(4.1)).unwrap(), MicroOutcome::Stable);
        assert_eq!(microscopic_check(1.8, &pop(3.0)).unwrap(), MicroOutcome::CConverts);
    }

    #[test]
    fn no_investment_loses_cooperators() {
        assert_eq!(
            microscopic_check(1.5, &InterferenceScheme::None).unwrap(),
            MicroOutcome::CConverts
        );
    }

    #[test]
    fn theta_grid_avoids_boundaries() {
        for b in [1.4, 1.6, 1.8, 2.0] {
            let g = theta_grid(b, 50);
            assert_eq!(g.len(), 50);
            assert!(g[0] > 4.0 * b - 5.0 && g[49] < 4.0 * b - 1.0);
            for t in g {
                assert!((t - (4.0 * b - 4.0)).abs() > 1e-3);
                assert!((t - (4.0 * b - 3.0)).abs() > 1e-3);
            }
        }
    }

    #[test]
    fn verify_passes_for_reference_values() {
        for b in [1.4, 1.6, 1.8, 2.0] {
            let r = verify_thresholds(b, 50).unwrap();
            assert!(r.passed(), "{:?}", r.mismatches);
            assert_eq!(r.checked + 2 * r.skipped, 100);
        }
        assert!(verify_thresholds(0.9, 50).is_err());
    }

    fn result(coop: f64, cost: f64) -> RunResult {
        RunResult {
            seed: 0,
            records: vec![],
            stationary_coop_fraction: coop,
            total_cost: cost,
            termination: Termination::Completed,
            cycle_period: None,
            cycle_start: None,
            executed_generations: 0,
            final_grid: Grid::filled(3, C).unwrap(),
        }
    }

    #[test]
    fn aggregate_single_and_pair() {
        let one = aggregate(&[result(0.3, 12.0)], 1.0, 2.0).unwrap();
        assert_eq!(one.mean_coop_fraction, 0.3);
        assert_eq!(one.mean_total_cost, 12.0);
        assert_eq!(one.stderr_coop, 0.0);
        assert_eq!(one.n_replicates, 1);
        let two = aggregate(&[result(0.4, 1.0), result(0.6, 3.0)], 1.0, 2.0).unwrap();
        assert!(approx(two.mean_coop_fraction, 0.5));
        // sd = sqrt(0.02), stderr = sd / sqrt(2) = 0.1
        assert!(approx(two.stderr_coop, 0.1));
        assert!(approx(two.stderr_cost, 1.0));
        assert_eq!(aggregate(&[], 0.0, 0.0), Err(AnalysisError::Empty));
    }

    #[test]
    fn aggregate_is_order_independent() {
        let rs: Vec<RunResult> = [0.1, 0.7, 0.3333, 0.9, 0.05]
            .iter()
            .enumerate()
            .map(|(i, &c)| result(c, 1e5 / (i as f64 + 1.3)))
            .collect();
        let mut rev = rs.clone();
        rev.reverse();
        assert_eq!(aggregate(&rs, 0.0, 0.0), aggregate(&rev, 0.0, 0.0));
    }

    #[test]
    fn cost_comparison_rejects_duplicate_labels() {
        let t = deterministic_template(10, 1.8).unwrap();
        let configs = vec![("a".to_string(), t.clone()), ("a".to_string(), t)];
        assert_eq!(
            cost_comparison(&configs, 1, 0),
            Err(AnalysisError::DuplicateLabel("a".into()))
        );
    }

    #[test]
    fn cost_comparison_is_pure() {
        let t = deterministic_template(20, 1.8).unwrap();
        let configs = neb_margin_configs(&t, 0.5).unwrap();
        let a = cost_comparison(&configs, 1, 9).unwrap();
        let b = cost_comparison(&configs, 1, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(),
            ["NEB-3", "NEB-4", "NEB-i", "NEB-ii"]
        );
    }
}
