//! Synchronous strategy updates.
//!
//! Both rules read a frozen `(grid, scores)` pair and build the next grid, so
//! the order in which agents are visited never matters.
//!
//! Random draws for the Fermi rule come from a ChaCha8 generator keyed by the
//! run's dynamics seed, with the generation number as the stream id. Agent `i`
//! owns words `8i .. 8i + 8` of that stream and always consumes exactly four
//! `u64` draws, in this order:
//!
//! 1. mutation test (`u < mu`),
//! 2. neighbour choice (top two bits, indexing N, E, S, W),
//! 3. acceptance test (`u < fermi_probability`),
//! 4. mutant strategy (top bit, 0 = C).
//!
//! The draws of an agent therefore depend only on (seed, generation, agent),
//! and row-parallel evaluation yields the same grid as a sequential pass.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Strategy};

const WORDS_PER_AGENT: u128 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("noise K = {0} must be finite and > 0")]
    Noise(f64),
    #[error("mutation rate mu = {0} must lie in [0, 1]")]
    Mutation(f64),
    #[error("scores must be finite (got {0}, {1})")]
    NonFinite(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRule {
    /// Imitate the best-scoring agent among self and the four neighbours.
    Deterministic,
    /// Pairwise comparison with one random neighbour via the Fermi function.
    Fermi {
        k: f64,
        #[serde(default)]
        mu: f64,
    },
}

impl UpdateRule {
    pub fn fermi(k: f64, mu: f64) -> Result<Self, DynamicsError> {
        let r = UpdateRule::Fermi { k, mu };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match *self {
            UpdateRule::Deterministic => Ok(()),
            UpdateRule::Fermi { k, mu } => {
                if !(k.is_finite() && k > 0.0) {
                    Err(DynamicsError::Noise(k))
                } else if !(0.0..=1.0).contains(&mu) {
                    Err(DynamicsError::Mutation(mu))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, UpdateRule::Deterministic)
    }

    pub fn mutation_rate(&self) -> f64 {
        match *self {
            UpdateRule::Deterministic => 0.0,
            UpdateRule::Fermi { mu, .. } => mu,
        }
    }
}

/// Probability that an agent with score `f_a` copies one with score `f_b`:
/// `1 / (1 + exp((f_a - f_b) / k))`.
pub fn fermi_probability(f_a: f64, f_b: f64, k: f64) -> Result<f64, DynamicsError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(DynamicsError::Noise(k));
    }
    if !(f_a.is_finite() && f_b.is_finite()) {
        return Err(DynamicsError::NonFinite(f_a, f_b));
    }
    Ok(fermi(f_a, f_b, k))
}

#[inline]
fn fermi(f_a: f64, f_b: f64, k: f64) -> f64 {
    let x = (f_a - f_b) / k;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Next grid under imitate-the-best. Self wins ties, then N, E, S, W.
pub fn step_deterministic(grid: &Grid, scores: &[f64]) -> Grid {
    let cells = (0..grid.len())
        .map(|i| grid.get(best_in_neighbourhood(grid, scores, i)))
        .collect();
    Grid::new(grid.side(), cells).expect("same shape")
}

/// Row-parallel [`step_deterministic`].
pub fn step_deterministic_par(grid: &Grid, scores: &[f64]) -> Grid {
    let side = grid.side();
    let mut cells = vec![Strategy::Cooperate; grid.len()];
    cells.par_chunks_mut(side).enumerate().for_each(|(row, out)| {
        for (col, slot) in out.iter_mut().enumerate() {
            let i = row * side + col;
            *slot = grid.get(best_in_neighbourhood(grid, scores, i));
        }
    });
    Grid::new(side, cells).expect("same shape")
}

#[inline]
fn best_in_neighbourhood(grid: &Grid, scores: &[f64], i: usize) -> usize {
    let mut best = i;
    for j in grid.neighbours(i) {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    best
}

/// Seed for the per-agent random streams of a run's Fermi updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentStreams {
    seed: u64,
}

impl AgentStreams {
    pub fn new(seed: u64) -> Self {
        AgentStreams { seed }
    }

    fn row_rng(&self, generation: u64, first_agent: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(generation);
        rng.set_word_pos(first_agent as u128 * WORDS_PER_AGENT);
        rng
    }
}

#[inline]
fn unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn fermi_agent(
    grid: &Grid,
    scores: &[f64],
    k: f64,
    mu: f64,
    i: usize,
    rng: &mut ChaCha8Rng,
) -> Strategy {
    let mutate = unit(rng.next_u64());
    let pick = (rng.next_u64() >> 62) as usize;
    let accept = unit(rng.next_u64());
    let mutant = rng.next_u64() >> 63;
    if mutate < mu {
        return if mutant == 0 {
            Strategy::Cooperate
        } else {
            Strategy::Defect
        };
    }
    let other = grid.neighbours(i)[pick];
    if accept < fermi(scores[i], scores[other], k) {
        grid.get(other)
    } else {
        grid.get(i)
    }
}

/// Next grid under the synchronous Fermi rule with mutation rate `mu`.
pub fn step_fermi(
    grid: &Grid,
    scores: &[f64],
    k: f64,
    mu: f64,
    streams: &AgentStreams,
    generation: u64,
) -> Grid {
    let mut rng = streams.row_rng(generation, 0);
    let cells = (0..grid.len())
        .map(|i| fermi_agent(grid, scores, k, mu, i, &mut rng))
        .collect();
    Grid::new(grid.side(), cells).expect("same shape")
}

/// Row-parallel [`step_fermi`]; produces the same grid.
pub fn step_fermi_par(
    grid: &Grid,
    scores: &[f64],
    k: f64,
    mu: f64,
    streams: &AgentStreams,
    generation: u64,
) -> Grid {
    let side = grid.side();
    let mut cells = vec![Strategy::Cooperate; grid.len()];
    cells.par_chunks_mut(side).enumerate().for_each(|(row, out)| {
        let first = row * side;
        let mut rng = streams.row_rng(generation, first);
        for (col, slot) in out.iter_mut().enumerate() {
            *slot = fermi_agent(grid, scores, k, mu, first + col, &mut rng);
        }
    });
    Grid::new(side, cells).expect("same shape")
}

/// Advances `grid` by one generation under `rule`.
pub fn step(
    rule: &UpdateRule,
    grid: &Grid,
    scores: &[f64],
    streams: &AgentStreams,
    generation: u64,
    parallel: bool,
) -> Grid {
    match (*rule, parallel) {
        (UpdateRule::Deterministic, false) => step_deterministic(grid, scores),
        (UpdateRule::Deterministic, true) => step_deterministic_par(grid, scores),
        (UpdateRule::Fermi { k, mu }, false) => step_fermi(grid, scores, k, mu, streams, generation),
        (UpdateRule::Fermi { k, mu }, true) => {
            step_fermi_par(grid, scores, k, mu, streams, generation)
        }
    }
}
