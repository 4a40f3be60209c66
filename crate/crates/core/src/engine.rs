//! Generation loop and replicate execution.
//!
//! One generation is: base scores, then investment (suppressed while the
//! grid is homogeneous), then a strategy update on the invested scores.
//! The metrics recorded for generation `t` describe the grid at the start of
//! `t` and the investment made during `t`.
//!
//! A run lasts `generations + measure_window` generations unless it stops
//! early. With `early_stop` set, it stops when the grid becomes homogeneous
//! (absorbing when there is no mutation) and, under the deterministic rule,
//! when the grid revisits an earlier state. Because the deterministic update
//! is a function of the grid alone, a revisit fixes the rest of the
//! trajectory: the remaining records are filled by repeating the cycle, so
//! costs and averages cover the full horizon either way.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, AgentStreams, UpdateRule};
use crate::error::ConfigError;
use crate::game::{compute_scores, compute_scores_par, PayoffParams};
use crate::grid::{self, Grid, Strategy};
use crate::interference::{InterferenceScheme, InvestmentOutcome};
use crate::seed::{derive_seed, replicate_seed};

pub const DEFAULT_GENERATIONS: usize = 200;
pub const DEFAULT_MEASURE_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub side: usize,
    pub payoff: PayoffParams,
    pub scheme: InterferenceScheme,
    pub rule: UpdateRule,
    pub generations: usize,
    pub measure_window: usize,
    pub seed: u64,
    pub initial_coop_probability: f64,
    /// Place exactly `round(p·Z)` cooperators instead of independent draws.
    pub exact_initial_count: bool,
    pub early_stop: bool,
    /// Evaluate scores and updates row-parallel inside the run.
    pub parallel_lattice: bool,
}

impl RunConfig {
    pub fn new(
        side: usize,
        payoff: PayoffParams,
        scheme: InterferenceScheme,
        rule: UpdateRule,
    ) -> Self {
        RunConfig {
            side,
            payoff,
            scheme,
            rule,
            generations: DEFAULT_GENERATIONS,
            measure_window: DEFAULT_MEASURE_WINDOW,
            seed: 0,
            initial_coop_probability: 0.5,
            exact_initial_count: false,
            early_stop: true,
            parallel_lattice: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scheme(mut self, scheme: InterferenceScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        grid::check_side(self.side).map_err(|e| ConfigError::new("model.side", e))?;
        PayoffParams::new(self.payoff.temptation(), self.payoff.punishment())
            .map_err(|e| ConfigError::new("model.b", e))?;
        self.scheme
            .validate()
            .map_err(|e| ConfigError::new("scheme", e))?;
        self.rule.validate().map_err(|e| ConfigError::new("rule", e))?;
        if self.generations == 0 {
            return Err(ConfigError::new("protocol.generations", "must be >= 1"));
        }
        if self.measure_window == 0 {
            return Err(ConfigError::new("protocol.measure_window", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.initial_coop_probability) {
            return Err(ConfigError::new(
                "model.initial_coop_probability",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.generations + self.measure_window
    }

    /// The initial grid for `self.seed`.
    pub fn initial_grid(&self) -> Result<Grid, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[0]));
        let g = if self.exact_initial_count {
            grid::random_grid_exact(self.side, self.initial_coop_probability, &mut rng)
        } else {
            grid::random_grid(self.side, self.initial_coop_probability, &mut rng)
        };
        g.map_err(|e| ConfigError::new("model", e))
    }

    fn streams(&self) -> AgentStreams {
        AgentStreams::new(derive_seed(self.seed, &[1]))
    }

    fn stops_at_homogeneity(&self) -> bool {
        self.early_stop && self.rule.mutation_rate() == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub coop_count: usize,
    pub generation_cost: f64,
    pub cumulative_cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    #[serde(rename = "completed")]
    Completed,
    #[serde(rename = "homogeneous_C")]
    HomogeneousC,
    #[serde(rename = "homogeneous_D")]
    HomogeneousD,
    #[serde(rename = "cycle_detected")]
    CycleDetected,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::HomogeneousC => "homogeneous_C",
            Termination::HomogeneousD => "homogeneous_D",
            Termination::CycleDetected => "cycle_detected",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<GenerationRecord>,
    pub stationary_coop_fraction: f64,
    pub total_cost: f64,
    pub termination: Termination,
    /// Period of the detected cycle; 1 for a mixed fixed point.
    pub cycle_period: Option<usize>,
    /// Generation at which the cycle's first state occurred.
    pub cycle_start: Option<usize>,
    /// Generations actually simulated; records past this point repeat the cycle.
    pub executed_generations: usize,
    pub final_grid: Grid,
}

impl RunResult {
    pub fn population(&self) -> usize {
        self.final_grid.len()
    }
}

/// Common strategy of a homogeneous grid.
pub fn is_homogeneous(grid: &Grid) -> Option<Strategy> {
    grid.homogeneous()
}

/// A run in progress, advanced one generation at a time.
pub struct Simulation {
    config: RunConfig,
    grid: Grid,
    generation: usize,
    cumulative_cost: f64,
    streams: AgentStreams,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let grid = config.initial_grid()?;
        Ok(Self::start(config, grid))
    }

    /// Starts from a given grid instead of the seeded initial one.
    pub fn from_grid(config: RunConfig, grid: Grid) -> Result<Self, ConfigError> {
        config.validate()?;
        if grid.side() != config.side {
            return Err(ConfigError::new(
                "model.side",
                format!("grid side {} does not match {}", grid.side(), config.side),
            ));
        }
        Ok(Self::start(config, grid))
    }

    fn start(config: RunConfig, grid: Grid) -> Self {
        let streams = config.streams();
        Simulation {
            config,
            grid,
            generation: 0,
            cumulative_cost: 0.0,
            streams,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Investment the scheme would make on the current grid.
    pub fn investment(&self) -> InvestmentOutcome {
        let base = self.base_scores();
        if self.grid.homogeneous().is_some() {
            InvestmentOutcome::zero(self.grid.len())
        } else {
            self.config.scheme.apply(&self.grid, &base)
        }
    }

    fn base_scores(&self) -> crate::game::ScoreField {
        if self.config.parallel_lattice {
            compute_scores_par(&self.grid, &self.config.payoff)
        } else {
            compute_scores(&self.grid, &self.config.payoff)
        }
    }

    /// Plays one generation and returns its record.
    pub fn step(&mut self) -> GenerationRecord {
        let mut scores = self.base_scores();
        let investment = if self.grid.homogeneous().is_some() {
            InvestmentOutcome::zero(self.grid.len())
        } else {
            self.config.scheme.apply(&self.grid, &scores)
        };
        scores.add_surplus(&investment.surplus);
        self.cumulative_cost += investment.generation_cost;
        let record = GenerationRecord {
            generation: self.generation,
            coop_count: self.grid.coop_count(),
            generation_cost: investment.generation_cost,
            cumulative_cost: self.cumulative_cost,
        };
        self.grid = dynamics::step(
            &self.config.rule,
            &self.grid,
            &scores,
            &self.streams,
            self.generation as u64,
            self.config.parallel_lattice,
        );
        self.generation += 1;
        record
    }
}

/// Grids seen so far, indexed by digest and confirmed by full comparison.
#[derive(Default)]
struct History {
    states: Vec<Grid>,
    by_digest: HashMap<u64, Vec<usize>>,
}

impl History {
    /// Returns the generation of an earlier identical grid, or records this one.
    fn visit(&mut self, grid: &Grid) -> Option<usize> {
        let digest = grid.digest();
        let slot = self.by_digest.entry(digest).or_default();
        if let Some(&seen) = slot.iter().find(|&&t| self.states[t] == *grid) {
            return Some(seen);
        }
        slot.push(self.states.len());
        self.states.push(grid.clone());
        None
    }
}

pub fn run(config: &RunConfig) -> Result<RunResult, ConfigError> {
    let sim = Simulation::new(config.clone())?;
    Ok(drive(sim))
}

/// Runs `config` from an explicit starting grid.
pub fn run_from_grid(config: &RunConfig, grid: Grid) -> Result<RunResult, ConfigError> {
    let sim = Simulation::from_grid(config.clone(), grid)?;
    Ok(drive(sim))
}

fn drive(mut sim: Simulation) -> RunResult {
    let config = sim.config().clone();
    let horizon = config.horizon();
    let z = sim.grid().len();
    let detect_cycles = config.early_stop && config.rule.is_deterministic();
    let mut history = History::default();
    let mut records = Vec::with_capacity(horizon);
    let mut termination = Termination::Completed;
    let mut cycle: Option<(usize, usize)> = None;

    while sim.generation() < horizon {
        if config.stops_at_homogeneity() {
            if let Some(s) = sim.grid().homogeneous() {
                records.push(sim.step());
                termination = match s {
                    Strategy::Cooperate => Termination::HomogeneousC,
                    Strategy::Defect => Termination::HomogeneousD,
                };
                break;
            }
        }
        if detect_cycles {
            if let Some(start) = history.visit(sim.grid()) {
                cycle = Some((start, sim.generation() - start));
                termination = Termination::CycleDetected;
                break;
            }
        }
        records.push(sim.step());
    }

    let executed = sim.generation();
    let mut final_grid = sim.grid().clone();
    if let Some((start, period)) = cycle {
        let mut cumulative = records.last().map_or(0.0, |r| r.cumulative_cost);
        for t in executed..horizon {
            let src = records[start + (t - start) % period];
            cumulative += src.generation_cost;
            records.push(GenerationRecord {
                generation: t,
                coop_count: src.coop_count,
                generation_cost: src.generation_cost,
                cumulative_cost: cumulative,
            });
        }
        final_grid = history.states[start + (horizon - start) % period].clone();
    }

    let stationary_coop_fraction = match termination {
        Termination::HomogeneousC => 1.0,
        Termination::HomogeneousD => 0.0,
        Termination::Completed | Termination::CycleDetected => {
            let window = config.measure_window.min(records.len());
            let tail = &records[records.len() - window..];
            tail.iter().map(|r| r.coop_count as f64).sum::<f64>() / (window * z) as f64
        }
    };

    RunResult {
        seed: config.seed,
        total_cost: records.last().map_or(0.0, |r| r.cumulative_cost),
        records,
        stationary_coop_fraction,
        termination,
        cycle_period: cycle.map(|(_, p)| p),
        cycle_start: cycle.map(|(s, _)| s),
        executed_generations: executed,
        final_grid,
    }
}

/// `n` independent runs; replicate `r` uses `replicate_seed(base_seed, r)`.
/// Replicates run on the current rayon pool and come back in index order.
pub fn run_replicates(
    config: &RunConfig,
    n: usize,
    base_seed: u64,
) -> Result<Vec<RunResult>, ConfigError> {
    config.validate()?;
    (0..n)
        .into_par_iter()
        .map(|r| run(&config.clone().with_seed(replicate_seed(base_seed, r))))
        .collect()
}
