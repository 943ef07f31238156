//! Work accounting for surrogate construction.

use serde::{Deserialize, Serialize};

/// Per-level solver work, solve counts, sample counts and training time.
///
/// Solver entries are indexed by grid level, sample and training entries by the level of the
/// map being trained. All counters only grow.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    /// `solver_work[i - 1]`: sum over level-`i` solves of points times iterations.
    pub solver_work: Vec<u64>,
    pub solves: Vec<usize>,
    /// `samples[i - 1]`: parameter points drawn while training the level-`i` map.
    pub samples: Vec<usize>,
    /// Wall-clock seconds spent training the level-`i` map.
    pub training_seconds: Vec<f64>,
    /// Wall-clock seconds spent in solves while building the level-`i` map.
    #[serde(default)]
    pub solve_seconds: Vec<f64>,
}

fn slot<T: Default + Clone>(v: &mut Vec<T>, level: usize) -> &mut T {
    assert!(level >= 1, "levels are 1-based");
    if v.len() < level {
        v.resize(level, T::default());
    }
    &mut v[level - 1]
}

impl CostLedger {
    pub fn charge_solve(&mut self, level: usize, work: u64) {
        *slot(&mut self.solver_work, level) += work;
        *slot(&mut self.solves, level) += 1;
    }

    pub fn add_samples(&mut self, level: usize, count: usize) {
        *slot(&mut self.samples, level) += count;
    }

    pub fn add_training(&mut self, level: usize, seconds: f64) {
        *slot(&mut self.training_seconds, level) += seconds.max(0.0);
    }

    pub fn add_solve_time(&mut self, level: usize, seconds: f64) {
        *slot(&mut self.solve_seconds, level) += seconds.max(0.0);
    }

    pub fn total_solver_work(&self) -> u64 {
        self.solver_work.iter().sum()
    }

    pub fn total_training_seconds(&self) -> f64 {
        self.training_seconds.iter().sum()
    }

    pub fn samples_at(&self, level: usize) -> usize {
        self.samples.get(level.wrapping_sub(1)).copied().unwrap_or(0)
    }

    pub fn solves_at(&self, level: usize) -> usize {
        self.solves.get(level.wrapping_sub(1)).copied().unwrap_or(0)
    }

    /// True if every counter of `self` is at least the matching counter of `earlier`.
    pub fn dominates(&self, earlier: &CostLedger) -> bool {
        fn ge<T: PartialOrd + Default + Copy>(a: &[T], b: &[T]) -> bool {
            b.iter().enumerate().all(|(i, x)| a.get(i).copied().unwrap_or_default() >= *x)
        }
        ge(&self.solver_work, &earlier.solver_work)
            && ge(&self.solves, &earlier.solves)
            && ge(&self.samples, &earlier.samples)
            && ge(&self.training_seconds, &earlier.training_seconds)
            && ge(&self.solve_seconds, &earlier.solve_seconds)
    }
}
