//! Cost-versus-accuracy comparison of a network run and a collocation run.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MlscReport;
use crate::error::{Error, Result};
use crate::multilevel::RunReport;
use crate::pde::archive::fmt_f64;

/// One accuracy level. Costs are cumulative up to the level; `*_normalized` columns are divided
/// by the largest collocation value, so that series peaks at exactly 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub level: usize,
    pub mlnn_error: Option<f64>,
    pub mlsc_error: Option<f64>,
    pub mlnn_solver_work: u64,
    pub mlsc_solver_work: u64,
    pub mlnn_solver_normalized: f64,
    pub mlsc_solver_normalized: f64,
    /// Solve plus training wall time.
    pub mlnn_seconds: f64,
    pub mlsc_seconds: f64,
    pub mlnn_combined_normalized: f64,
    pub mlsc_combined_normalized: f64,
}

pub fn compare_reports(mlnn: &RunReport, mlsc: &MlscReport) -> Result<Vec<ComparisonRow>> {
    if mlnn.problem != mlsc.problem || mlnn.n1 != mlsc.n1 {
        return Err(Error::InvalidInput(format!(
            "reports describe different setups: {} / N1 = {} vs {} / N1 = {}",
            mlnn.problem, mlnn.n1, mlsc.problem, mlsc.n1
        )));
    }
    let top = mlnn.n_levels.min(mlsc.levels.len());
    if top < 2 {
        return Err(Error::InvalidInput("need at least two common levels to compare".into()));
    }
    let at = |v: &[f64], level: usize| v.get(level - 1).copied().unwrap_or(0.0);
    let mut rows = Vec::new();
    let (mut work, mut seconds) = (0u64, 0.0f64);
    for level in 2..=top {
        let lr = mlnn
            .levels
            .iter()
            .find(|l| l.level == level)
            .ok_or_else(|| Error::InvalidInput(format!("network report lacks level {level}")))?;
        work += lr.solver_work;
        seconds += at(&mlnn.timing.training_seconds, level) + at(&mlnn.timing.solve_seconds, level);
        let c = &mlsc.levels[level - 1];
        rows.push(ComparisonRow {
            level,
            mlnn_error: mlnn.held_out.as_ref().map(|h| h.max_rms_per_level[level - 1]),
            mlsc_error: c.held_out_max_rms,
            mlnn_solver_work: work,
            mlsc_solver_work: c.cumulative_work,
            mlnn_solver_normalized: 0.0,
            mlsc_solver_normalized: 0.0,
            mlnn_seconds: seconds,
            mlsc_seconds: c.cumulative_solve_seconds,
            mlnn_combined_normalized: 0.0,
            mlsc_combined_normalized: 0.0,
        });
    }
    let max_work = rows.iter().map(|r| r.mlsc_solver_work).max().unwrap_or(0).max(1) as f64;
    let max_seconds = rows.iter().map(|r| r.mlsc_seconds).fold(0.0, f64::max);
    let max_seconds = if max_seconds > 0.0 { max_seconds } else { 1.0 };
    for r in &mut rows {
        r.mlnn_solver_normalized = r.mlnn_solver_work as f64 / max_work;
        r.mlsc_solver_normalized = r.mlsc_solver_work as f64 / max_work;
        r.mlnn_combined_normalized = r.mlnn_seconds / max_seconds;
        r.mlsc_combined_normalized = r.mlsc_seconds / max_seconds;
    }
    Ok(rows)
}

pub fn write_comparison_csv(mut out: impl Write, rows: &[ComparisonRow]) -> Result<()> {
    writeln!(
        out,
        "level,mlnn_error,mlsc_error,mlnn_solver_work,mlsc_solver_work,mlnn_solver_normalized,mlsc_solver_normalized,mlnn_seconds,mlsc_seconds,mlnn_combined_normalized,mlsc_combined_normalized"
    )?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.level,
            opt(r.mlnn_error),
            opt(r.mlsc_error),
            r.mlnn_solver_work,
            r.mlsc_solver_work,
            fmt_f64(r.mlnn_solver_normalized),
            fmt_f64(r.mlsc_solver_normalized),
            fmt_f64(r.mlnn_seconds),
            fmt_f64(r.mlsc_seconds),
            fmt_f64(r.mlnn_combined_normalized),
            fmt_f64(r.mlsc_combined_normalized),
        )?;
    }
    Ok(())
}
