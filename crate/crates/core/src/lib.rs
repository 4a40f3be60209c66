//! Spatial Prisoner's Dilemma on a periodic square lattice, with an external
//! decision-maker that pays cooperators and accounts for what it spends.
//!
//! - [`grid`]: lattice storage, neighbours, digests and text snapshots.
//! - [`game`]: payoffs and base scores.
//! - [`interference`]: POP, NEB, NEB-i and NEB-ii investment.
//! - [`dynamics`]: deterministic and Fermi updates.
//! - [`engine`]: the generation loop, early stopping and replicates.
//! - [`analysis`]: thresholds, the lone-defector check and aggregation.
//! - [`sweep`]: parameter grids.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod game;
pub mod grid;
pub mod interference;
pub mod output;
pub mod seed;
pub mod sweep;
