//! Finite-difference solvers, nested grids and reference solutions.

pub mod advection_diffusion;
pub mod archive;
pub mod burgers;
pub mod grid;
pub mod similarity;
pub mod synthetic;
pub mod tridiag;

use serde::{Deserialize, Serialize};

pub use advection_diffusion::{exact_advection_diffusion, solve_advection_diffusion};
pub use burgers::{solve_burgers, NewtonConfig};
pub use grid::{level_error, FieldSample, GridHierarchy};
pub use similarity::theorem1_check;
pub use synthetic::synthetic_2d_sample;

use crate::error::{Error, Result};

/// A discrete solution with the work spent producing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    /// Newton iterations, or 1 for a direct solve.
    pub iterations: usize,
    /// `||F||_inf` per Newton iterate (empty for direct solves).
    pub residual_history: Vec<f64>,
}

impl Solution {
    /// Solver work: grid points times sweeps.
    pub fn work(&self) -> u64 {
        (self.values.len() * self.iterations.max(1)) as u64
    }
}

/// Anything that can produce a 1D solution vector for a parameter point on `n` intervals.
pub trait LevelSolver: Sync {
    fn solve(&self, z: &[f64], n: usize) -> Result<Solution>;
}

impl<F> LevelSolver for F
where
    F: Fn(&[f64], usize) -> Result<Solution> + Sync,
{
    fn solve(&self, z: &[f64], n: usize) -> Result<Solution> {
        self(z, n)
    }
}

/// Axis-aligned box of uncertain parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidInput("domain bounds must be nonempty and of equal length".into()));
        }
        for (a, b) in lower.iter().zip(&upper) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidInput(format!("invalid bounds [{a}, {b}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim() && z.iter().zip(&self.lower).zip(&self.upper).all(|((v, a), b)| a <= v && v <= b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Problem {
    /// z = (Re)
    AdvectionDiffusion,
    /// z = (Re)
    Burgers {
        #[serde(default)]
        newton: NewtonConfig,
    },
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::AdvectionDiffusion => "advection-diffusion",
            Problem::Burgers { .. } => "burgers",
        }
    }

    pub fn z_dim(&self) -> usize {
        1
    }
}

impl LevelSolver for Problem {
    fn solve(&self, z: &[f64], n: usize) -> Result<Solution> {
        if z.len() != self.z_dim() {
            return Err(Error::InvalidInput(format!("{} takes {} parameter(s), got {}", self.name(), self.z_dim(), z.len())));
        }
        match self {
            Problem::AdvectionDiffusion => solve_advection_diffusion(z[0], n),
            Problem::Burgers { newton } => solve_burgers(z[0], n, newton),
        }
    }
}

/// Solves on level `level` of `grid` and restricts onto the coarsest grid.
pub fn solve_restricted(solver: &dyn LevelSolver, z: &[f64], grid: &GridHierarchy, level: usize) -> Result<(FieldSample, u64)> {
    let sol = solver
        .solve(z, grid.intervals(level))
        .map_err(|e| Error::SolverAt { z: z.to_vec(), source: Box::new(e) })?;
    let values = grid.restrict(&sol.values, level)?;
    Ok((FieldSample::new(z.to_vec(), level, values), sol.work()))
}
