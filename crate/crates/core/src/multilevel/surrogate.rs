//! The telescoping surrogate: one coarse solve followed by a chain of learned corrections.

use serde::{Deserialize, Serialize};

use super::dataset::LevelPair;
use crate::error::{Error, Result};
use crate::nn::ErrorMapNetwork;
use crate::pde::{solve_restricted, GridHierarchy, LevelSolver, ParameterDomain};
use crate::tensor::Tensor;

/// A map from a coarse-grid field and parameter point to a correction of the same length.
pub trait ErrorMap: Sync {
    fn correction(&self, input: &[f64], z: &[f64]) -> Result<Vec<f64>>;
}

impl ErrorMap for ErrorMapNetwork {
    fn correction(&self, input: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let field = Tensor::new(self.input_shape.clone(), input.to_vec())?;
        Ok(self.forward(&field, z)?.into_data())
    }
}

/// `||x||_2 / sqrt(len)`.
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// `[u~(1), u~(2), ...]` with `u~(i) = u~(i-1) + P(i)(u~(i-1), z)`, starting from `coarse`.
pub fn propagate(maps: &[&dyn ErrorMap], coarse: &[f64], z: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut fields = Vec::with_capacity(maps.len() + 1);
    fields.push(coarse.to_vec());
    for map in maps {
        let current = fields.last().expect("nonempty");
        let corr = map.correction(current, z)?;
        if corr.len() != current.len() {
            return Err(Error::Shape(format!("correction has {} values, field {}", corr.len(), current.len())));
        }
        let next = current.iter().zip(&corr).map(|(u, c)| u + c).collect();
        fields.push(next);
    }
    Ok(fields)
}

/// Trained maps `P(2)..P(N_L)` over a grid hierarchy and parameter box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub grid: GridHierarchy,
    pub domain: ParameterDomain,
    pub maps: Vec<ErrorMapNetwork>,
    /// Validation threshold each map was trained to.
    pub epsilon: f64,
    /// Correction size below which no further level is added.
    pub epsilon_acc: f64,
}

impl Surrogate {
    /// Number of levels represented, `N_L = maps + 1`.
    pub fn n_levels(&self) -> usize {
        self.maps.len() + 1
    }

    pub fn map_refs(&self) -> Vec<&dyn ErrorMap> {
        self.maps.iter().map(|m| m as &dyn ErrorMap).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateEval {
    /// `u~(N_L)` on the coarse grid.
    pub values: Vec<f64>,
    /// `u~(1)..u~(N_L)`.
    pub levels: Vec<Vec<f64>>,
    /// `z` lies outside the training box.
    pub extrapolated: bool,
    pub coarse_solves: usize,
    pub network_evals: usize,
    pub solver_work: u64,
}

/// Evaluates an arbitrary chain of maps on top of a coarse solve at `z`.
pub fn evaluate_chain(
    solver: &dyn LevelSolver,
    grid: &GridHierarchy,
    domain: &ParameterDomain,
    maps: &[&dyn ErrorMap],
    z: &[f64],
) -> Result<SurrogateEval> {
    let (coarse, work) = solve_restricted(solver, z, grid, 1)?;
    let levels = propagate(maps, &coarse.values, z)?;
    Ok(SurrogateEval {
        values: levels.last().expect("nonempty").clone(),
        levels,
        extrapolated: !domain.contains(z),
        coarse_solves: 1,
        network_evals: maps.len(),
        solver_work: work,
    })
}

pub fn surrogate_eval(surrogate: &Surrogate, solver: &dyn LevelSolver, z: &[f64]) -> Result<SurrogateEval> {
    evaluate_chain(solver, &surrogate.grid, &surrogate.domain, &surrogate.map_refs(), z)
}

/// True if the map's correction on any training input has RMS above `epsilon_acc`.
pub fn should_add_level(map: &dyn ErrorMap, train: &[LevelPair], epsilon_acc: f64) -> Result<bool> {
    for pair in train {
        if rms(&map.correction(&pair.input, &pair.z)?) > epsilon_acc {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(f64);

    impl ErrorMap for Constant {
        fn correction(&self, input: &[f64], _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![self.0; input.len()])
        }
    }

    fn pair(n: usize) -> LevelPair {
        LevelPair { z: vec![0.5], input: vec![0.0; n], target: vec![0.0; n] }
    }

    #[test]
    fn level_criterion() {
        assert!(!should_add_level(&Constant(0.0), &[pair(5)], 1e-6).unwrap());
        assert!(should_add_level(&Constant(2e-6), &[pair(5)], 1e-6).unwrap());
        assert!(!should_add_level(&Constant(0.5e-6), &[pair(5), pair(9)], 1e-6).unwrap());
    }

    #[test]
    fn empty_chain_is_coarse_solve() {
        let solver = |z: &[f64], n: usize| -> Result<crate::pde::Solution> {
            Ok(crate::pde::Solution { values: (0..=n).map(|j| z[0] * j as f64).collect(), iterations: 1, residual_history: vec![] })
        };
        let grid = GridHierarchy::new(4, 1).unwrap();
        let domain = ParameterDomain::new(vec![0.0], vec![1.0]).unwrap();
        let out = evaluate_chain(&solver, &grid, &domain, &[], &[0.5]).unwrap();
        assert_eq!(out.values, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!((out.coarse_solves, out.network_evals), (1, 0));
        assert!(!out.extrapolated);
        let chained = evaluate_chain(&solver, &grid, &domain, &[&Constant(1.0), &Constant(0.25)], &[2.0]).unwrap();
        assert_eq!(chained.values[0], 1.25);
        assert_eq!(chained.network_evals, 2);
        assert!(chained.extrapolated);
    }

    #[test]
    fn rms_is_length_normalized() {
        assert_eq!(rms(&[3.0, 4.0, 0.0, 0.0]), 2.5);
        assert_eq!(rms(&[]), 0.0);
    }
}
