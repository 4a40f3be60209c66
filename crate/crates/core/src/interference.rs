//! External investment in cooperators.
//!
//! Every scheme produces an [`InvestmentOutcome`]: a non-negative surplus per
//! agent that is added to its score before imitation, and the decision-maker's
//! cost for the generation, which is the sum of that surplus.
//!
//! - `Pop`: global. If the cooperator count x_C is at most `p_c · Z`, every
//!   cooperator receives `theta`.
//! - `Neb`: local. A cooperator with at most `n_c` cooperating neighbours
//!   receives `theta`. With `n_c = 4` this is the same as `Pop` with `p_c = 1`.
//! - `NebI`: a cooperator whose best-scoring neighbour is a defector with a
//!   strictly higher score gets the difference plus `eps`.
//! - `NebII`: `NebI`, then each cooperator is topped up so that it beats, by
//!   `eps`, the fittest defector seen by each of its defecting neighbours.
//!
//! All conditions are evaluated on base (pre-investment) scores. Ties for
//! "best-scoring neighbour" go to the first neighbour in N, E, S, W order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::ScoreField;
use crate::grid::{Grid, Strategy};

/// Slack on the POP comparison `x_C <= p_c · Z` so that fractions such as
/// 0.85 select the intended integer count.
const POP_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SchemeError {
    #[error("theta = {0} must be finite and > 0")]
    Theta(f64),
    #[error("eps = {0} must be finite and > 0")]
    Eps(f64),
    #[error("p_c = {0} must lie in [0, 1]")]
    PopFraction(f64),
    #[error("n_c = {0} must lie in 0..=4")]
    NebThreshold(u8),
}

/// Which cooperators the external decision-maker pays, and how much.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterferenceScheme {
    None,
    Pop { p_c: f64, theta: f64 },
    Neb { n_c: u8, theta: f64 },
    NebI { eps: f64 },
    NebIi { eps: f64 },
}

impl InterferenceScheme {
    pub fn pop(p_c: f64, theta: f64) -> Result<Self, SchemeError> {
        let s = InterferenceScheme::Pop { p_c, theta };
        s.validate()?;
        Ok(s)
    }

    pub fn neb(n_c: u8, theta: f64) -> Result<Self, SchemeError> {
        let s = InterferenceScheme::Neb { n_c, theta };
        s.validate()?;
        Ok(s)
    }

    pub fn neb_i(eps: f64) -> Result<Self, SchemeError> {
        let s = InterferenceScheme::NebI { eps };
        s.validate()?;
        Ok(s)
    }

    pub fn neb_ii(eps: f64) -> Result<Self, SchemeError> {
        let s = InterferenceScheme::NebIi { eps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            InterferenceScheme::None => Ok(()),
            InterferenceScheme::Pop { p_c, theta } => {
                if !(0.0..=1.0).contains(&p_c) {
                    Err(SchemeError::PopFraction(p_c))
                } else if !positive(theta) {
                    Err(SchemeError::Theta(theta))
                } else {
                    Ok(())
                }
            }
            InterferenceScheme::Neb { n_c, theta } => {
                if n_c > 4 {
                    Err(SchemeError::NebThreshold(n_c))
                } else if !positive(theta) {
                    Err(SchemeError::Theta(theta))
                } else {
                    Ok(())
                }
            }
            InterferenceScheme::NebI { eps } | InterferenceScheme::NebIi { eps } => {
                if positive(eps) {
                    Ok(())
                } else {
                    Err(SchemeError::Eps(eps))
                }
            }
        }
    }

    /// Short name used in tables: `none`, `pop`, `neb`, `neb_i`, `neb_ii`.
    pub fn kind(&self) -> &'static str {
        match self {
            InterferenceScheme::None => "none",
            InterferenceScheme::Pop { .. } => "pop",
            InterferenceScheme::Neb { .. } => "neb",
            InterferenceScheme::NebI { .. } => "neb_i",
            InterferenceScheme::NebIi { .. } => "neb_ii",
        }
    }

    /// Per-generation investment for `grid` given its base scores.
    pub fn apply(&self, grid: &Grid, base: &ScoreField) -> InvestmentOutcome {
        match *self {
            InterferenceScheme::None => InvestmentOutcome::zero(grid.len()),
            InterferenceScheme::Pop { p_c, theta } => apply_pop(grid, p_c, theta),
            InterferenceScheme::Neb { n_c, theta } => apply_neb(grid, n_c, theta),
            InterferenceScheme::NebI { eps } => apply_neb_i(grid, base, eps),
            InterferenceScheme::NebIi { eps } => apply_neb_ii(grid, base, eps),
        }
    }
}

/// Surplus per agent and the cost of paying it.
#[derive(Clone, Debug, PartialEq)]
pub struct InvestmentOutcome {
    pub surplus: Vec<f64>,
    pub generation_cost: f64,
}

impl InvestmentOutcome {
    pub fn zero(z: usize) -> Self {
        InvestmentOutcome {
            surplus: vec![0.0; z],
            generation_cost: 0.0,
        }
    }

    fn from_surplus(surplus: Vec<f64>) -> Self {
        let generation_cost = surplus.iter().sum();
        InvestmentOutcome {
            surplus,
            generation_cost,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.generation_cost == 0.0
    }
}

pub fn apply_pop(grid: &Grid, p_c: f64, theta: f64) -> InvestmentOutcome {
    let z = grid.len();
    let x_c = grid.coop_count() as f64;
    if x_c > p_c * z as f64 + POP_SLACK {
        return InvestmentOutcome::zero(z);
    }
    let surplus = grid
        .cells()
        .iter()
        .map(|s| if s.is_cooperator() { theta } else { 0.0 })
        .collect();
    InvestmentOutcome::from_surplus(surplus)
}

pub fn apply_neb(grid: &Grid, n_c: u8, theta: f64) -> InvestmentOutcome {
    let surplus = (0..grid.len())
        .map(|i| {
            if grid.get(i).is_cooperator() && grid.coop_neighbours(i) <= usize::from(n_c) {
                theta
            } else {
                0.0
            }
        })
        .collect();
    InvestmentOutcome::from_surplus(surplus)
}

/// Neighbour of `i` with the highest score; the first in N, E, S, W order wins ties.
#[inline]
pub fn best_neighbour(grid: &Grid, scores: &[f64], i: usize) -> usize {
    let n = grid.neighbours(i);
    let mut best = n[0];
    for &j in &n[1..] {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    best
}

#[inline]
fn outscore_amount(target: f64, own: f64, eps: f64) -> f64 {
    target - own + eps
}

fn neb_i_grant(grid: &Grid, base: &[f64], i: usize, eps: f64) -> f64 {
    if !grid.get(i).is_cooperator() {
        return 0.0;
    }
    let b = best_neighbour(grid, base, i);
    if grid.get(b) == Strategy::Defect && base[b] > base[i] {
        outscore_amount(base[b], base[i], eps)
    } else {
        0.0
    }
}

pub fn apply_neb_i(grid: &Grid, base: &ScoreField, eps: f64) -> InvestmentOutcome {
    assert_eq!(base.len(), grid.len());
    let surplus = (0..grid.len())
        .map(|i| neb_i_grant(grid, base, i, eps))
        .collect();
    InvestmentOutcome::from_surplus(surplus)
}

pub fn apply_neb_ii(grid: &Grid, base: &ScoreField, eps: f64) -> InvestmentOutcome {
    assert_eq!(base.len(), grid.len());
    // Phase one is NEB-i. Phase two only reads phase-one grants and base scores.
    let first: Vec<f64> = (0..grid.len())
        .map(|i| neb_i_grant(grid, base, i, eps))
        .collect();
    let surplus = (0..grid.len())
        .map(|i| {
            let mut grant = first[i];
            if !grid.get(i).is_cooperator() {
                return grant;
            }
            for d in grid.neighbours(i) {
                if grid.get(d) != Strategy::Defect {
                    continue;
                }
                let m = best_neighbour(grid, base, d);
                if grid.get(m) == Strategy::Defect {
                    // post score must reach base[m] + eps
                    grant = grant.max(outscore_amount(base[m], base[i], eps));
                }
            }
            grant
        })
        .collect();
    InvestmentOutcome::from_surplus(surplus)
}
