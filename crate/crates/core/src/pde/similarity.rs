//! Similarity of successive inter-level errors.
//!
//! If `u^(h) = u_exact + h^d v + O(h^(d+1))`, then `2^d e^(h/4) = e^(h/2) + O(h^(d+1))`, so the
//! defect ratio below should be `O(h)`.

use super::grid::GridHierarchy;
use super::{solve_restricted, LevelSolver};
use crate::error::{Error, Result};

/// Relative size of `||e^(h/2)||_inf` under which the check is reported as degenerate.
const DEGENERATE_REL: f64 = 1e-13;

/// `rho = ||2^d e^(h/4) - e^(h/2)||_inf / ||e^(h/2)||_inf` from the first three levels of
/// `grid`, where `e^(h/2) = u^(2)|X1 - u^(1)` and `e^(h/4) = u^(3)|X1 - u^(2)|X1`.
pub fn theorem1_check(solver: &dyn LevelSolver, z: &[f64], grid: &GridHierarchy, order: u32) -> Result<f64> {
    if grid.n_levels < 3 {
        return Err(Error::InvalidInput(format!("similarity check needs 3 levels, got {}", grid.n_levels)));
    }
    let u: Vec<Vec<f64>> = (1..=3)
        .map(|level| solve_restricted(solver, z, grid, level).map(|(s, _)| s.values))
        .collect::<Result<_>>()?;
    let e_half: Vec<f64> = u[1].iter().zip(&u[0]).map(|(a, b)| a - b).collect();
    let e_quarter: Vec<f64> = u[2].iter().zip(&u[1]).map(|(a, b)| a - b).collect();
    let norm = e_half.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = u[0].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if norm <= DEGENERATE_REL * scale {
        return Err(Error::DegenerateError { norm });
    }
    let factor = 2f64.powi(order as i32);
    let defect = e_quarter.iter().zip(&e_half).fold(0.0f64, |m, (q, h)| m.max((factor * q - h).abs()));
    Ok(defect / norm)
}
