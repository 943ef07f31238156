//! Steady 1D advection-diffusion `u' - u''/Re = 0`, `u(0) = 0`, `u(1) = 1`.

use super::tridiag::solve_tridiagonal;
use super::Solution;
use crate::error::{Error, Result};

/// Closed-form solution `(exp(x Re) - 1) / (exp(Re) - 1)`, evaluated without overflow.
pub fn exact_advection_diffusion(x: f64, re: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // exp((x-1)Re) (1 - exp(-x Re)) / (1 - exp(-Re))
    ((x - 1.0) * re).exp() * (-x * re).exp_m1() / (-re).exp_m1()
}

/// Interior tridiagonal system in diffusion-scaled form (every row multiplied by `Re dx^2`).
fn assemble(re: f64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let dx = 1.0 / n as f64;
    let half_cell = 0.5 * re * dx;
    let m = n - 1;
    let lower = vec![-half_cell - 1.0; m];
    let diag = vec![2.0; m];
    let upper = vec![half_cell - 1.0; m];
    let mut rhs = vec![0.0; m];
    // u_n = 1 moved to the right-hand side
    rhs[m - 1] = -(half_cell - 1.0);
    (lower, diag, upper, rhs)
}

/// Max-norm residual of the scaled central-difference equations at the interior points.
pub fn advection_diffusion_residual(u: &[f64], re: f64) -> f64 {
    let n = u.len() - 1;
    let half_cell = 0.5 * re / n as f64;
    (1..n)
        .map(|j| (half_cell * (u[j + 1] - u[j - 1]) - (u[j + 1] - 2.0 * u[j] + u[j - 1])).abs())
        .fold(0.0, f64::max)
}

/// Central-difference solution on `n` intervals (`n + 1` points), solved directly.
pub fn solve_advection_diffusion(re: f64, n: usize) -> Result<Solution> {
    if !(re > 0.0 && re.is_finite()) {
        return Err(Error::InvalidInput(format!("Reynolds number must be positive, got {re}")));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 intervals, got {n}")));
    }
    let cell_re = re / n as f64;
    if cell_re >= 2.0 {
        return Err(Error::CellReynolds { cell_re });
    }
    let (lower, diag, upper, rhs) = assemble(re, n);
    let interior = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    values.extend(interior);
    values.push(1.0);
    Ok(Solution { values, iterations: 1, residual_history: Vec::new() })
}
