//! Prisoner's Dilemma payoffs and per-generation base scores.

use std::ops::{Deref, Index};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Strategy};

/// Reward for mutual cooperation.
pub const REWARD: f64 = 1.0;
/// Sucker's payoff.
pub const SUCKER: f64 = 0.0;

#[derive(Debug, Error, PartialEq)]
pub enum PayoffError {
    #[error("temptation b = {0} must satisfy 1 < b <= 2")]
    Temptation(f64),
    #[error("punishment P = {0} must satisfy 0 <= P < 1")]
    Punishment(f64),
}

/// Scaled PD matrix: T = b, R = 1, S = 0 and P (0 by default).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffParams {
    temptation: f64,
    punishment: f64,
}

impl PayoffParams {
    pub fn new(temptation: f64, punishment: f64) -> Result<Self, PayoffError> {
        if !(temptation > 1.0 && temptation <= 2.0) {
            return Err(PayoffError::Temptation(temptation));
        }
        if !(0.0..REWARD).contains(&punishment) {
            return Err(PayoffError::Punishment(punishment));
        }
        Ok(PayoffParams {
            temptation,
            punishment,
        })
    }

    /// Weak PD with P = S = 0.
    pub fn weak(temptation: f64) -> Result<Self, PayoffError> {
        Self::new(temptation, 0.0)
    }

    pub fn temptation(&self) -> f64 {
        self.temptation
    }

    pub fn punishment(&self) -> f64 {
        self.punishment
    }

    /// Payoff to `me` from one encounter with `other`.
    #[inline]
    pub fn pair_payoff(&self, me: Strategy, other: Strategy) -> f64 {
        match (me, other) {
            (Strategy::Cooperate, Strategy::Cooperate) => REWARD,
            (Strategy::Cooperate, Strategy::Defect) => SUCKER,
            (Strategy::Defect, Strategy::Cooperate) => self.temptation,
            (Strategy::Defect, Strategy::Defect) => self.punishment,
        }
    }

    /// Score of an agent with `coop_neighbours` cooperating neighbours out of four.
    #[inline]
    pub fn score_for(&self, me: Strategy, coop_neighbours: usize) -> f64 {
        let k = coop_neighbours as f64;
        let rest = (4 - coop_neighbours) as f64;
        match me {
            Strategy::Cooperate => k * REWARD + rest * SUCKER,
            Strategy::Defect => k * self.temptation + rest * self.punishment,
        }
    }
}

/// Per-agent accumulated payoff for one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreField(Vec<f64>);

impl ScoreField {
    pub fn from_vec(scores: Vec<f64>) -> Self {
        ScoreField(scores)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Adds `surplus[i]` to every score.
    pub fn add_surplus(&mut self, surplus: &[f64]) {
        assert_eq!(self.0.len(), surplus.len());
        for (s, extra) in self.0.iter_mut().zip(surplus) {
            *s += extra;
        }
    }
}

impl Deref for ScoreField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ScoreField {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Base score of every agent: the sum of its four pairwise payoffs.
/// No interference is included and agents do not play themselves.
pub fn compute_scores(grid: &Grid, params: &PayoffParams) -> ScoreField {
    let cells = grid.cells();
    let scores = (0..grid.len())
        .map(|i| {
            let me = cells[i];
            grid.neighbours(i)
                .iter()
                .map(|&j| params.pair_payoff(me, cells[j]))
                .sum()
        })
        .collect();
    ScoreField(scores)
}

/// Row-parallel version of [`compute_scores`]; the result is identical.
pub fn compute_scores_par(grid: &Grid, params: &PayoffParams) -> ScoreField {
    let side = grid.side();
    let cells = grid.cells();
    let mut scores = vec![0.0; grid.len()];
    scores
        .par_chunks_mut(side)
        .enumerate()
        .for_each(|(row, out)| {
            for (col, slot) in out.iter_mut().enumerate() {
                let i = row * side + col;
                let me = cells[i];
                *slot = grid
                    .neighbours(i)
                    .iter()
                    .map(|&j| params.pair_payoff(me, cells[j]))
                    .sum();
            }
        });
    ScoreField(scores)
}
