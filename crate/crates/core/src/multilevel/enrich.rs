//! The train / validate / enlarge loop for one level.

use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::cost::CostLedger;
use super::dataset::{assemble_pairs, sample_z, solve_points, LevelDataset, SolvedPoint};
use super::derive_seed;
use super::search::{grid_search, uses_transfer, CellReport, HyperGrid, Hyperparameters, TrainingSettings};
use super::surrogate::ErrorMap;
use crate::error::{Error, Result};
use crate::nn::ErrorMapNetwork;
use crate::pde::{GridHierarchy, LevelSolver, ParameterDomain};

const TAG_Z: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_INIT: u64 = 3;

/// New parameter points per round: `10^dim` for the first map, `2^dim` above it.
pub fn batch_size(level: usize, dim: usize) -> usize {
    let base: usize = if level == 2 { 10 } else { 2 };
    base.pow(dim as u32)
}

/// Everything needed to build maps level by level.
pub struct LevelBuilder<'a> {
    pub solver: &'a dyn LevelSolver,
    pub grid: GridHierarchy,
    pub domain: ParameterDomain,
    pub hyper: HyperGrid,
    pub settings: TrainingSettings,
    /// Stop once the best validation error drops below this.
    pub epsilon: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub samples: usize,
    pub v_min: f64,
    pub hp: Hyperparameters,
    pub cells: Vec<CellReport>,
}

#[derive(Clone, Debug)]
pub struct LevelOutcome {
    pub level: usize,
    pub network: ErrorMapNetwork,
    pub hp: Hyperparameters,
    pub v_min: f64,
    pub rounds: Vec<RoundReport>,
    /// Final dataset, including the solved points behind it.
    pub dataset: LevelDataset,
    pub points: Vec<SolvedPoint>,
}

impl LevelOutcome {
    pub fn v_history(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.v_min).collect()
    }

    pub fn samples(&self) -> usize {
        self.points.len()
    }
}

impl LevelBuilder<'_> {
    pub fn cells(&self, level: usize) -> Vec<Hyperparameters> {
        if uses_transfer(level, &self.settings) {
            self.hyper.transfer_cells()
        } else {
            self.hyper.fresh_cells()
        }
    }

    /// Trains the level-`level` map on top of `maps` (levels `2..level`), adding parameter points
    /// until the best validation error falls below `epsilon`. Every round after the first
    /// warm-starts each cell from its previous parameters.
    pub fn enrich_until_valid(&self, level: usize, maps: &[ErrorMapNetwork], ledger: &mut CostLedger) -> Result<LevelOutcome> {
        if maps.len() + 2 != level {
            return Err(Error::InvalidInput(format!("level {level} needs {} trained maps, got {}", level - 2, maps.len())));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let map_refs: Vec<&dyn ErrorMap> = maps.iter().map(|m| m as &dyn ErrorMap).collect();
        let prev = maps.last();
        let cells = self.cells(level);
        let batch = batch_size(level, self.domain.dim());
        let mut points: Vec<SolvedPoint> = Vec::new();
        let mut warm: Option<Vec<Option<ErrorMapNetwork>>> = None;
        let mut rounds: Vec<RoundReport> = Vec::new();
        for round in 0..self.max_rounds {
            let tags = [level as u64, round as u64];
            let zs = sample_z(&self.domain, batch, derive_seed(self.seed, &[tags[0], tags[1], TAG_Z]));
            let start = Instant::now();
            points.extend(solve_points(level, &zs, self.solver, &self.grid, ledger)?);
            ledger.add_solve_time(level, start.elapsed().as_secs_f64());
            ledger.add_samples(level, zs.len());
            if points.len() < 2 {
                continue;
            }
            let pairs = assemble_pairs(&points, &map_refs)?;
            let dataset = LevelDataset::split(level, pairs, derive_seed(self.seed, &[tags[0], tags[1], TAG_SPLIT]))?;
            let start = Instant::now();
            let search = grid_search(
                level,
                &dataset,
                prev,
                warm.as_deref(),
                &cells,
                &self.settings,
                &self.domain,
                derive_seed(self.seed, &[tags[0], tags[1], TAG_INIT]),
            )?;
            ledger.add_training(level, start.elapsed().as_secs_f64());
            let v_min = search.v_min();
            if let Some(last) = rounds.last() {
                if v_min > 1.05 * last.v_min {
                    warn!("level {level} round {round}: v_min rose from {:e} to {v_min:e}", last.v_min);
                }
            }
            info!("level {level} round {round}: {} samples, v_min = {v_min:e} ({:?})", points.len(), search.best_hp());
            rounds.push(RoundReport { samples: points.len(), v_min, hp: search.best_hp().clone(), cells: search.cells.clone() });
            if v_min < self.epsilon {
                return Ok(LevelOutcome {
                    level,
                    network: search.best_network().clone(),
                    hp: search.best_hp().clone(),
                    v_min,
                    rounds,
                    dataset,
                    points,
                });
            }
            warm = Some(search.networks);
        }
        Err(Error::MaxRounds { level, rounds: self.max_rounds, history: rounds.iter().map(|r| r.v_min).collect() })
    }
}

/// Free-function form of [`LevelBuilder::enrich_until_valid`].
pub fn enrich_until_valid(builder: &LevelBuilder<'_>, level: usize, maps: &[ErrorMapNetwork], ledger: &mut CostLedger) -> Result<LevelOutcome> {
    builder.enrich_until_valid(level, maps, ledger)
}

#[cfg(test)]
mod tests {
    use super::batch_size;

    #[test]
    fn batch_sizes() {
        assert_eq!(batch_size(2, 1), 10);
        assert_eq!(batch_size(3, 1), 2);
        assert_eq!(batch_size(2, 2), 100);
        assert_eq!(batch_size(3, 2), 4);
    }
}
