//! Multi-level stochastic collocation baseline: per-level polynomial interpolants of the
//! inter-level differences on nested Clenshaw-Curtis grids.

pub mod collocation;
pub mod compare;

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use collocation::{cc_nodes, CollocationGrid};
pub use compare::{compare_reports, write_comparison_csv, ComparisonRow};

use crate::error::{Error, Result};
use crate::multilevel::run::{held_out_z, RunConfig};
use crate::multilevel::{rms, CostLedger};
use crate::pde::{solve_restricted, GridHierarchy, LevelSolver, ParameterDomain};

pub const MLSC_REPORT_FORMAT: &str = "mlsc-report/1";

fn default_epsilon() -> f64 {
    1e-10
}
fn default_cap() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlscSettings {
    /// Stop refining a level once the hierarchical surplus RMS falls below this.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_cap")]
    pub max_cc_level: usize,
}

impl Default for MlscSettings {
    fn default() -> Self {
        Self { epsilon: default_epsilon(), max_cc_level: default_cap() }
    }
}

/// Interpolant of one PDE level: `u(1)` on level 1, `e(i)` above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlscLevel {
    pub level: usize,
    pub grid: CollocationGrid,
    pub values: Vec<Vec<f64>>,
    /// Surplus RMS observed at each refinement `m = 1, 2, ...`.
    pub surplus_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlscSurrogate {
    pub domain: ParameterDomain,
    pub levels: Vec<MlscLevel>,
}

/// Sum of the per-level interpolants of levels `1..=upto` at `z`.
pub fn mlsc_eval_upto(s: &MlscSurrogate, z: &[f64], upto: usize) -> Result<Vec<f64>> {
    let mut out: Option<Vec<f64>> = None;
    for lvl in s.levels.iter().take(upto) {
        let v = lvl.grid.interpolate(&lvl.values, z)?;
        match out.as_mut() {
            None => out = Some(v),
            Some(acc) => acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
        }
    }
    out.ok_or_else(|| Error::InvalidInput("empty collocation surrogate".into()))
}

pub fn mlsc_eval(s: &MlscSurrogate, z: &[f64]) -> Result<Vec<f64>> {
    mlsc_eval_upto(s, z, s.levels.len())
}

/// Solves keyed by parameter-point bits and grid level, so nested nodes are never re-solved.
struct SolveCache<'a> {
    solver: &'a dyn LevelSolver,
    grid: GridHierarchy,
    fields: HashMap<(Vec<u64>, usize), Vec<f64>>,
}

impl SolveCache<'_> {
    fn key(z: &[f64], level: usize) -> (Vec<u64>, usize) {
        (z.iter().map(|v| v.to_bits()).collect(), level)
    }

    /// Solves every missing (z, level) pair concurrently and charges `ledger`, in input order.
    fn ensure(&mut self, points: &[Vec<f64>], levels: &[usize], ledger: &mut CostLedger, charge_to: usize) -> Result<()> {
        let missing: Vec<(Vec<f64>, usize)> = points
            .iter()
            .flat_map(|z| levels.iter().map(move |&l| (z.clone(), l)))
            .filter(|(z, l)| !self.fields.contains_key(&Self::key(z, *l)))
            .collect();
        let start = Instant::now();
        let (solver, grid) = (self.solver, self.grid);
        let solved: Vec<Result<_>> = missing.par_iter().map(|(z, l)| solve_restricted(solver, z, &grid, *l)).collect();
        for ((z, l), r) in missing.iter().zip(solved) {
            let (sample, work) = r?;
            ledger.charge_solve(*l, work);
            self.fields.insert(Self::key(z, *l), sample.values);
        }
        ledger.add_solve_time(charge_to, start.elapsed().as_secs_f64());
        Ok(())
    }

    fn level_data(&self, z: &[f64], level: usize) -> Vec<f64> {
        let fine = &self.fields[&Self::key(z, level)];
        if level == 1 {
            return fine.clone();
        }
        let coarse = &self.fields[&Self::key(z, level - 1)];
        fine.iter().zip(coarse).map(|(a, b)| a - b).collect()
    }
}

/// Builds the collocation surrogate for levels `1..=n_levels`. Each level is refined until the
/// interpolant of level `m - 1` predicts the new nodes of level `m` within `epsilon` (RMS over
/// the field); level `m - 1` is kept.
pub fn build_mlsc(
    solver: &dyn LevelSolver,
    domain: &ParameterDomain,
    grid: GridHierarchy,
    settings: &MlscSettings,
    ledger: &mut CostLedger,
) -> Result<MlscSurrogate> {
    let mut cache = SolveCache { solver, grid, fields: HashMap::new() };
    let mut levels = Vec::with_capacity(grid.n_levels);
    for level in 1..=grid.n_levels {
        let needed: Vec<usize> = if level == 1 { vec![1] } else { vec![level - 1, level] };
        let mut current = CollocationGrid::new(0, domain)?;
        cache.ensure(&current.points(), &needed, ledger, level)?;
        let mut values: Vec<Vec<f64>> = current.points().iter().map(|z| cache.level_data(z, level)).collect();
        let mut history = Vec::new();
        loop {
            let m = current.cc_level + 1;
            if m > settings.max_cc_level {
                return Err(Error::CollocationCap { cap: settings.max_cc_level, level });
            }
            let next = CollocationGrid::new(m, domain)?;
            let points = next.points();
            cache.ensure(&points, &needed, ledger, level)?;
            let next_values: Vec<Vec<f64>> = points.iter().map(|z| cache.level_data(z, level)).collect();
            let mut surplus = 0.0f64;
            for (z, v) in points.iter().zip(&next_values) {
                let pred = current.interpolate(&values, z)?;
                let d: Vec<f64> = v.iter().zip(&pred).map(|(a, b)| a - b).collect();
                surplus = surplus.max(rms(&d));
            }
            history.push(surplus);
            if surplus < settings.epsilon {
                break;
            }
            current = next;
            values = next_values;
        }
        info!("collocation level {level}: cc level {} ({} nodes), surplus history {history:?}", current.cc_level, current.len());
        levels.push(MlscLevel { level, grid: current, values, surplus_history: history });
    }
    Ok(MlscSurrogate { domain: domain.clone(), levels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlscLevelReport {
    pub level: usize,
    pub cc_level: usize,
    pub nodes: usize,
    pub surplus_history: Vec<f64>,
    /// Solver work charged on grid level `level`.
    pub solver_work: u64,
    /// Cumulative solver work of grid levels `1..=level`.
    pub cumulative_work: u64,
    pub cumulative_solve_seconds: f64,
    /// Max over held-out points of the RMS error of levels `1..=level` against `u(level)`.
    pub held_out_max_rms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlscReport {
    pub format: String,
    pub problem: String,
    pub seed: u64,
    pub n1: usize,
    pub epsilon: f64,
    pub levels: Vec<MlscLevelReport>,
    pub total_solver_work: u64,
}

impl MlscReport {
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for l in &mut r.levels {
            l.cumulative_solve_seconds = 0.0;
        }
        r
    }
}

pub struct MlscRun {
    pub surrogate: MlscSurrogate,
    pub ledger: CostLedger,
    pub report: MlscReport,
}

/// Collocation counterpart of [`crate::multilevel::run_mlnn`] on the same config: builds
/// `max_levels` levels, evaluates the held-out points and writes `mlsc_report.json`.
pub fn run_mlsc(config: &RunConfig, out_dir: Option<&Path>) -> Result<MlscRun> {
    config.validate()?;
    run_mlsc_with(config, &config.problem, out_dir)
}

pub fn run_mlsc_with(config: &RunConfig, solver: &dyn LevelSolver, out_dir: Option<&Path>) -> Result<MlscRun> {
    let grid = GridHierarchy::new(config.n1, config.max_levels)?;
    let run = || -> Result<MlscRun> {
        let mut ledger = CostLedger::default();
        let surrogate = build_mlsc(solver, &config.domain, grid, &config.mlsc, &mut ledger)?;
        let zs = held_out_z(config);
        let errors: Vec<Vec<f64>> = zs
            .par_iter()
            .map(|z| {
                (1..=grid.n_levels)
                    .map(|l| {
                        let approx = mlsc_eval_upto(&surrogate, z, l)?;
                        let (truth, _) = solve_restricted(solver, z, &grid, l)?;
                        Ok(rms(&approx.iter().zip(&truth.values).map(|(a, b)| a - b).collect::<Vec<_>>()))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut cumulative = 0;
        let mut seconds = 0.0;
        let levels = surrogate
            .levels
            .iter()
            .map(|l| {
                let work = ledger.solver_work.get(l.level - 1).copied().unwrap_or(0);
                cumulative += work;
                seconds += ledger.solve_seconds.get(l.level - 1).copied().unwrap_or(0.0);
                MlscLevelReport {
                    level: l.level,
                    cc_level: l.grid.cc_level,
                    nodes: l.grid.len(),
                    surplus_history: l.surplus_history.clone(),
                    solver_work: work,
                    cumulative_work: cumulative,
                    cumulative_solve_seconds: seconds,
                    held_out_max_rms: (!errors.is_empty()).then(|| errors.iter().map(|e| e[l.level - 1]).fold(0.0, f64::max)),
                }
            })
            .collect();
        let report = MlscReport {
            format: MLSC_REPORT_FORMAT.into(),
            problem: config.problem.name().into(),
            seed: config.seed,
            n1: config.n1,
            epsilon: config.mlsc.epsilon,
            levels,
            total_solver_work: ledger.total_solver_work(),
        };
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("mlsc_report.json"), serde_json::to_string_pretty(&report)?)?;
        }
        Ok(MlscRun { surrogate, ledger, report })
    };
    match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}
