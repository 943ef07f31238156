//! Steady viscous Burgers `(u^2/2)' - u''/Re = 0`, `u(0) = 0`, `u(1) = 1`, solved by Newton
//! iteration on the central-difference system.

use serde::{Deserialize, Serialize};

use super::tridiag::solve_tridiagonal;
use super::Solution;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Target for `||F(u)||_inf / max(1, 1/(Re dx^2))`.
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum `n / Re`; rejects grids too coarse for the boundary layer.
    pub min_points_per_re: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50, min_points_per_re: 0.3 }
    }
}

/// Interior residual rows `F_j`, `j = 1..n-1`, with the boundary values taken from `u`.
pub fn burgers_residual(u: &[f64], re: f64) -> Vec<f64> {
    let n = u.len() - 1;
    let dx = 1.0 / n as f64;
    let adv = 1.0 / (4.0 * dx);
    let diff = 1.0 / (re * dx * dx);
    (1..n)
        .map(|j| adv * (u[j + 1] * u[j + 1] - u[j - 1] * u[j - 1]) - diff * (u[j + 1] - 2.0 * u[j] + u[j - 1]))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn solve_burgers(re: f64, n: usize, newton: &NewtonConfig) -> Result<Solution> {
    if !(re > 0.0 && re.is_finite()) {
        return Err(Error::InvalidInput(format!("Reynolds number must be positive, got {re}")));
    }
    if n < 2 || (n as f64) < newton.min_points_per_re * re {
        return Err(Error::InvalidInput(format!(
            "{n} intervals too coarse for Re = {re} (need at least {})",
            (newton.min_points_per_re * re).ceil()
        )));
    }
    let dx = 1.0 / n as f64;
    let adv = 1.0 / (2.0 * dx);
    let diff = 1.0 / (re * dx * dx);
    let scale = diff.max(1.0);

    let mut u: Vec<f64> = (0..=n).map(|j| j as f64 * dx).collect();
    let mut f = burgers_residual(&u, re);
    let mut norm = max_abs(&f);
    let mut history = vec![norm];
    let m = n - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![2.0 * diff; m];
    let mut upper = vec![0.0; m];
    for iter in 0..newton.max_iter {
        if norm <= newton.tol * scale {
            return Ok(Solution { values: u, iterations: iter, residual_history: history });
        }
        for k in 0..m {
            let j = k + 1;
            lower[k] = -adv * u[j - 1] - diff;
            upper[k] = adv * u[j + 1] - diff;
        }
        diag.fill(2.0 * diff);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;

        // halve the step while the residual 2-norm grows
        let merit = sum_sq(&f);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let mut trial = u.clone();
            for (k, s) in step.iter().enumerate() {
                trial[k + 1] += alpha * s;
            }
            let tf = burgers_residual(&trial, re);
            let tn = max_abs(&tf);
            if tn.is_finite() && sum_sq(&tf) <= merit {
                accepted = Some((trial, tf, tn));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, tf, tn)) = accepted else {
            return Err(Error::NewtonDivergence { iterations: iter + 1, residual: norm });
        };
        u = trial;
        f = tf;
        norm = tn;
        history.push(norm);
    }
    if norm <= newton.tol * scale {
        return Ok(Solution { values: u, iterations: newton.max_iter, residual_history: history });
    }
    Err(Error::NewtonDivergence { iterations: newton.max_iter, residual: norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries_and_residual() {
        for re in [1.0, 100.0, 1000.0] {
            let s = solve_burgers(re, 300, &NewtonConfig::default()).unwrap();
            assert_eq!(s.values[0], 0.0);
            assert_eq!(s.values[300], 1.0);
            let scale = (300.0f64 * 300.0 / re).max(1.0);
            assert!(max_abs(&burgers_residual(&s.values, re)) <= 1e-12 * scale, "Re {re}");
        }
    }

    #[test]
    fn unscaled_residual_at_high_reynolds() {
        let s = solve_burgers(1000.0, 300, &NewtonConfig::default()).unwrap();
        assert!(max_abs(&burgers_residual(&s.values, 1000.0)) <= 1e-12);
        assert!(s.iterations <= 20, "{} iterations", s.iterations);
    }

    #[test]
    fn coarse_grid_guard() {
        assert!(solve_burgers(1000.0, 200, &NewtonConfig::default()).is_err());
    }

    #[test]
    fn iteration_budget_reported() {
        let cfg = NewtonConfig { max_iter: 1, ..NewtonConfig::default() };
        let err = solve_burgers(1000.0, 300, &cfg).unwrap_err();
        assert!(matches!(err, Error::NewtonDivergence { iterations: 1, .. }));
    }
}
