//! Nested 1D grid hierarchies, restriction by subsampling and inter-level errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grids on `[0, 1]` with `n_coarse * 2^(i-1)` intervals on level `i` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridHierarchy {
    pub n_coarse: usize,
    pub n_levels: usize,
}

impl GridHierarchy {
    pub fn new(n_coarse: usize, n_levels: usize) -> Result<Self> {
        if n_coarse == 0 || n_levels == 0 {
            return Err(Error::InvalidInput("grid hierarchy needs n_coarse >= 1 and at least one level".into()));
        }
        Ok(Self { n_coarse, n_levels })
    }

    /// Interval count `N^(i)` of level `i`.
    pub fn intervals(&self, level: usize) -> usize {
        assert!(level >= 1, "levels are 1-based");
        self.n_coarse << (level - 1)
    }

    pub fn points(&self, level: usize) -> usize {
        self.intervals(level) + 1
    }

    pub fn coordinates(&self, level: usize) -> Vec<f64> {
        let n = self.intervals(level);
        (0..=n).map(|j| j as f64 / n as f64).collect()
    }

    /// Subsamples a level-`from` vector onto level `to` (`to <= from`).
    pub fn restrict_to(&self, values: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
        if to == 0 || to > from {
            return Err(Error::InvalidInput(format!("cannot restrict level {from} to level {to}")));
        }
        if values.len() != self.points(from) {
            return Err(Error::Shape(format!(
                "level {from} vector needs {} values, got {}",
                self.points(from),
                values.len()
            )));
        }
        let stride = 1 << (from - to);
        Ok(values.iter().step_by(stride).copied().collect())
    }

    /// Restriction onto the coarsest grid.
    pub fn restrict(&self, values: &[f64], level: usize) -> Result<Vec<f64>> {
        self.restrict_to(values, level, 1)
    }
}

/// A solution restricted to the coarsest grid, tagged with its level and parameter point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub z: Vec<f64>,
    pub level: usize,
    pub values: Vec<f64>,
    #[serde(default = "one")]
    pub quantity_channels: usize,
}

fn one() -> usize {
    1
}

impl FieldSample {
    pub fn new(z: Vec<f64>, level: usize, values: Vec<f64>) -> Self {
        Self { z, level, values, quantity_channels: 1 }
    }
}

/// `e^(i) = u^(i)|X1 - u^(i-1)|X1` for two restricted samples at the same z.
pub fn level_error(fine: &FieldSample, coarse: &FieldSample) -> Result<Vec<f64>> {
    if fine.z != coarse.z {
        return Err(Error::InvalidInput(format!("z mismatch: {:?} vs {:?}", fine.z, coarse.z)));
    }
    if fine.level != coarse.level + 1 {
        return Err(Error::InvalidInput(format!(
            "level_error needs consecutive levels, got {} and {}",
            fine.level, coarse.level
        )));
    }
    if fine.values.len() != coarse.values.len() {
        return Err(Error::Shape("restricted fields differ in length".into()));
    }
    Ok(fine.values.iter().zip(&coarse.values).map(|(a, b)| a - b).collect())
}
