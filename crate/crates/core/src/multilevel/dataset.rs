//! Parameter sampling and the per-level training/validation pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::CostLedger;
use super::surrogate::{propagate, ErrorMap};
use crate::error::{Error, Result};
use crate::nn::Sample;
use crate::pde::{solve_restricted, GridHierarchy, LevelSolver, ParameterDomain};
use crate::tensor::Tensor;

/// `count` independent uniform draws from the box `domain`.
pub fn sample_z(domain: &ParameterDomain, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            domain
                .lower
                .iter()
                .zip(&domain.upper)
                .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
                .collect()
        })
        .collect()
}

/// One example for the level-`i` map: the level-`(i-1)` field on the coarse grid, the parameter
/// point and the level-`i` field on the coarse grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPair {
    pub z: Vec<f64>,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl LevelPair {
    /// The correction the map has to produce.
    pub fn correction(&self) -> Vec<f64> {
        self.target.iter().zip(&self.input).map(|(t, i)| t - i).collect()
    }

    pub fn to_sample(&self) -> Sample {
        let n = self.input.len();
        Sample {
            input: Tensor::new(vec![1, n], self.input.clone()).expect("nonempty field"),
            z: self.z.clone(),
            target: Tensor::new(vec![1, n], self.correction()).expect("nonempty field"),
        }
    }
}

/// Training and validation pairs for one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDataset {
    pub level: usize,
    pub train: Vec<LevelPair>,
    pub validation: Vec<LevelPair>,
}

/// Validation share of an `n`-element set: a fifth, rounded up.
pub fn validation_count(n: usize) -> usize {
    n.div_ceil(5).max(1)
}

impl LevelDataset {
    /// Shuffles `pairs` with `seed` and splits them 80/20.
    pub fn split(level: usize, mut pairs: Vec<LevelPair>, seed: u64) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 pairs to split, got {}", pairs.len())));
        }
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let validation = pairs.split_off(pairs.len() - validation_count(pairs.len()));
        Ok(Self { level, train: pairs, validation })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn train_samples(&self) -> Vec<Sample> {
        self.train.iter().map(LevelPair::to_sample).collect()
    }

    pub fn validation_samples(&self) -> Vec<Sample> {
        self.validation.iter().map(LevelPair::to_sample).collect()
    }
}

/// Coarse and level-`i` solves at one parameter point, both restricted to the coarse grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolvedPoint {
    pub z: Vec<f64>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
}

/// Solves levels 1 and `level` at every point (concurrently) and charges `ledger` in input order.
pub fn solve_points(
    level: usize,
    zs: &[Vec<f64>],
    solver: &dyn LevelSolver,
    grid: &GridHierarchy,
    ledger: &mut CostLedger,
) -> Result<Vec<SolvedPoint>> {
    if level < 2 || level > grid.n_levels {
        return Err(Error::InvalidInput(format!("level {level} outside 2..={}", grid.n_levels)));
    }
    let solved: Vec<Result<_>> = zs
        .par_iter()
        .map(|z| {
            let coarse = solve_restricted(solver, z, grid, 1)?;
            let fine = solve_restricted(solver, z, grid, level)?;
            Ok((coarse, fine))
        })
        .collect();
    let mut points = Vec::with_capacity(zs.len());
    for (z, r) in zs.iter().zip(solved) {
        let ((coarse, w1), (fine, wi)) = r?;
        ledger.charge_solve(1, w1);
        ledger.charge_solve(level, wi);
        points.push(SolvedPoint { z: z.clone(), coarse: coarse.values, fine: fine.values });
    }
    Ok(points)
}

/// Pairs for the level `maps.len() + 2` map: inputs are the coarse solves pushed through the
/// already trained `maps`, targets are the stored level-`i` solves.
pub fn assemble_pairs(points: &[SolvedPoint], maps: &[&dyn ErrorMap]) -> Result<Vec<LevelPair>> {
    points
        .par_iter()
        .map(|p| {
            let input = propagate(maps, &p.coarse, &p.z)?.pop().expect("at least the coarse field");
            Ok(LevelPair { z: p.z.clone(), input, target: p.fine.clone() })
        })
        .collect()
}

/// Solves, assembles and splits the dataset for the level-`level` map. `maps` holds the trained
/// maps of levels `2..level`.
pub fn build_level_dataset(
    level: usize,
    zs: &[Vec<f64>],
    solver: &dyn LevelSolver,
    grid: &GridHierarchy,
    maps: &[&dyn ErrorMap],
    ledger: &mut CostLedger,
    split_seed: u64,
) -> Result<LevelDataset> {
    if maps.len() + 2 != level {
        return Err(Error::InvalidInput(format!("level {level} needs {} trained maps, got {}", level - 2, maps.len())));
    }
    let points = solve_points(level, zs, solver, grid, ledger)?;
    LevelDataset::split(level, assemble_pairs(&points, maps)?, split_seed)
}
