//! End-to-end surrogate construction: level loop, held-out evaluation and run artifacts.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::CostLedger;
use super::dataset::sample_z;
use super::derive_seed;
use super::enrich::{LevelBuilder, RoundReport};
use super::search::{HyperGrid, Hyperparameters, TrainingSettings};
use super::surrogate::{rms, should_add_level, surrogate_eval, Surrogate};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, TrainConfig};
use crate::pde::archive::fmt_f64;
use crate::mlsc::MlscSettings;
use crate::pde::{solve_restricted, GridHierarchy, LevelSolver, ParameterDomain, Problem};

pub const REPORT_FORMAT: &str = "mlnn-report/1";
const TAG_HELD_OUT: u64 = 0xe7a1;

/// Partial overrides of the standard hyperparameter grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub lambda: Option<Vec<f64>>,
    pub n_cnn: Option<Vec<usize>>,
    pub n_fc: Option<Vec<usize>>,
    pub width: Option<Vec<usize>>,
}

fn default_max_levels() -> usize {
    5
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_epsilon_acc() -> f64 {
    1e-6
}
fn default_filters() -> usize {
    4
}
fn default_true() -> bool {
    true
}
fn default_max_rounds() -> usize {
    50
}
fn default_held_out() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub domain: ParameterDomain,
    /// Interval count of the coarsest grid.
    pub n1: usize,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_epsilon_acc")]
    pub epsilon_acc: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default = "default_filters")]
    pub filters_first_layer: usize,
    #[serde(default = "default_true")]
    pub transfer: bool,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Parameter points for the held-out error table.
    #[serde(default = "default_held_out")]
    pub held_out: usize,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Settings for the collocation baseline run on the same config.
    #[serde(default)]
    pub mlsc: MlscSettings,
}

impl RunConfig {
    /// Defaults for the given problem, box and coarse grid.
    pub fn new(problem: Problem, domain: ParameterDomain, n1: usize) -> Self {
        Self {
            problem,
            domain,
            n1,
            max_levels: default_max_levels(),
            epsilon: default_epsilon(),
            epsilon_acc: default_epsilon_acc(),
            seed: 0,
            training: TrainConfig::default(),
            grid: GridOverrides::default(),
            filters_first_layer: default_filters(),
            transfer: true,
            max_rounds: default_max_rounds(),
            held_out: default_held_out(),
            jobs: None,
            mlsc: MlscSettings::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hyper_grid(&self) -> HyperGrid {
        let mut g = HyperGrid::standard(self.n1);
        let o = &self.grid;
        if let Some(v) = &o.lambda {
            g.lambda = v.clone();
        }
        if let Some(v) = &o.n_cnn {
            g.n_cnn = v.clone();
        }
        if let Some(v) = &o.n_fc {
            g.n_fc = v.clone();
        }
        if let Some(v) = &o.width {
            g.width = v.clone();
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        ParameterDomain::new(self.domain.lower.clone(), self.domain.upper.clone())?;
        if self.domain.dim() != self.problem.z_dim() {
            return Err(Error::InvalidInput(format!(
                "{} takes {} parameter(s), domain has {}",
                self.problem.name(),
                self.problem.z_dim(),
                self.domain.dim()
            )));
        }
        self.validate_numbers()
    }

    fn validate_numbers(&self) -> Result<()> {
        if self.n1 < 2 {
            return Err(Error::InvalidInput("n1 must be at least 2".into()));
        }
        if self.max_levels < 2 || self.max_levels > 16 {
            return Err(Error::InvalidInput("max_levels must lie in 2..=16".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon_acc > 0.0) {
            return Err(Error::InvalidInput("thresholds must be positive".into()));
        }
        if !(self.mlsc.epsilon > 0.0) {
            return Err(Error::InvalidInput("collocation epsilon must be positive".into()));
        }
        if self.max_rounds == 0 || self.filters_first_layer == 0 || self.jobs == Some(0) {
            return Err(Error::InvalidInput("max_rounds, filters_first_layer and jobs must be positive".into()));
        }
        let t = &self.training;
        if t.max_epochs == 0 || !(t.learning_rate > 0.0) || t.plateau_patience == 0 || !(t.plateau_decay > 0.0 && t.plateau_decay <= 1.0) {
            return Err(Error::InvalidInput("invalid optimizer settings".into()));
        }
        self.hyper_grid().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub samples: usize,
    pub v_min: f64,
    pub v_history: Vec<f64>,
    pub hp: Hyperparameters,
    pub trainable_params: usize,
    pub total_params: usize,
    /// Solver work charged while building this level.
    pub solver_work: u64,
    pub rounds: Vec<RoundReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOutReport {
    pub count: usize,
    /// Max over points of the RMS error of `u~(i)` against `u(i)`, for `i = 1..N_L`.
    pub max_rms_per_level: Vec<f64>,
    pub mean_rms_per_level: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub training_seconds: Vec<f64>,
    pub solve_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// Everything written to `report.json`. Only `timing` differs between identical reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub problem: String,
    pub seed: u64,
    pub n1: usize,
    pub n_levels: usize,
    pub epsilon: f64,
    pub epsilon_acc: f64,
    pub stop_reason: String,
    pub levels: Vec<LevelReport>,
    pub solver_work: Vec<u64>,
    pub solves: Vec<usize>,
    pub samples: Vec<usize>,
    pub total_solver_work: u64,
    pub held_out: Option<HeldOutReport>,
    pub timing: Timing,
}

impl RunReport {
    /// Parameter points drawn per map level, `samples_per_level()[k]` for level `k + 2`.
    pub fn samples_per_level(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.samples).collect()
    }

    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.timing = Timing { training_seconds: vec![], solve_seconds: vec![], total_seconds: 0.0 };
        r
    }
}

pub struct MlnnRun {
    pub surrogate: Surrogate,
    pub ledger: CostLedger,
    pub report: RunReport,
    /// Held-out points and per-level RMS errors behind `errors.csv`.
    pub held_out_errors: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Builds the surrogate for `config.problem` and, if `out_dir` is given, writes `report.json`,
/// `errors.csv` and `checkpoints/level_<i>.json` there.
pub fn run_mlnn(config: &RunConfig, out_dir: Option<&Path>) -> Result<MlnnRun> {
    config.validate()?;
    run_mlnn_with(config, &config.problem, out_dir)
}

/// As [`run_mlnn`] with an explicit solver in place of `config.problem`.
pub fn run_mlnn_with(config: &RunConfig, solver: &dyn LevelSolver, out_dir: Option<&Path>) -> Result<MlnnRun> {
    config.validate_numbers()?;
    match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(|| run_inner(config, solver, out_dir)),
        None => run_inner(config, solver, out_dir),
    }
}

fn run_inner(config: &RunConfig, solver: &dyn LevelSolver, out_dir: Option<&Path>) -> Result<MlnnRun> {
    let start = Instant::now();
    let grid = GridHierarchy::new(config.n1, config.max_levels)?;
    let builder = LevelBuilder {
        solver,
        grid,
        domain: config.domain.clone(),
        hyper: config.hyper_grid(),
        settings: TrainingSettings {
            train: config.training.clone(),
            filters_first_layer: config.filters_first_layer,
            transfer: config.transfer,
        },
        epsilon: config.epsilon,
        max_rounds: config.max_rounds,
        seed: config.seed,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir.join("checkpoints"))?;
    }
    let mut ledger = CostLedger::default();
    let mut maps = Vec::new();
    let mut levels = Vec::new();
    let mut level = 2;
    let stop_reason = loop {
        let work_before = ledger.total_solver_work();
        let outcome = builder.enrich_until_valid(level, &maps, &mut ledger)?;
        info!("level {level} done: {} samples, v_min = {:e}", outcome.samples(), outcome.v_min);
        if let Some(dir) = out_dir {
            let meta = serde_json::json!({ "level": level, "hp": outcome.hp, "v_min": outcome.v_min, "samples": outcome.samples() });
            Checkpoint::new(outcome.network.clone(), config.seed, meta).save(&dir.join("checkpoints").join(format!("level_{level}.json")))?;
        }
        levels.push(LevelReport {
            level,
            samples: outcome.samples(),
            v_min: outcome.v_min,
            v_history: outcome.v_history(),
            hp: outcome.hp.clone(),
            trainable_params: outcome.network.trainable_param_count(),
            total_params: outcome.network.param_count(),
            solver_work: ledger.total_solver_work() - work_before,
            rounds: outcome.rounds.clone(),
        });
        let add = should_add_level(&outcome.network, &outcome.dataset.train, config.epsilon_acc)?;
        maps.push(outcome.network);
        if !add {
            break "corrections below epsilon_acc";
        }
        if level == config.max_levels {
            break "max_levels reached";
        }
        level += 1;
    };
    let n_levels = maps.len() + 1;
    let surrogate = Surrogate {
        grid: GridHierarchy::new(config.n1, n_levels)?,
        domain: config.domain.clone(),
        maps,
        epsilon: config.epsilon,
        epsilon_acc: config.epsilon_acc,
    };

    let held_out_errors = held_out_table(&surrogate, solver, &held_out_z(config))?;
    let held_out = (!held_out_errors.is_empty()).then(|| {
        let per_level = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            (0..n_levels).map(|i| f(&held_out_errors.iter().map(|(_, e)| e[i]).collect::<Vec<_>>())).collect()
        };
        HeldOutReport {
            count: held_out_errors.len(),
            max_rms_per_level: per_level(&|v| v.iter().fold(0.0f64, |m, x| m.max(*x))),
            mean_rms_per_level: per_level(&|v| v.iter().sum::<f64>() / v.len() as f64),
        }
    });

    let report = RunReport {
        format: REPORT_FORMAT.into(),
        problem: config.problem.name().into(),
        seed: config.seed,
        n1: config.n1,
        n_levels,
        epsilon: config.epsilon,
        epsilon_acc: config.epsilon_acc,
        stop_reason: stop_reason.into(),
        levels,
        solver_work: ledger.solver_work.clone(),
        solves: ledger.solves.clone(),
        samples: ledger.samples.clone(),
        total_solver_work: ledger.total_solver_work(),
        held_out,
        timing: Timing {
            training_seconds: ledger.training_seconds.clone(),
            solve_seconds: ledger.solve_seconds.clone(),
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
        write_errors_csv(std::fs::File::create(dir.join("errors.csv"))?, &held_out_errors, n_levels)?;
    }
    Ok(MlnnRun { surrogate, ledger, report, held_out_errors })
}

/// Held-out parameter points of a run, shared by the network and collocation runs.
pub fn held_out_z(config: &RunConfig) -> Vec<Vec<f64>> {
    sample_z(&config.domain, config.held_out, derive_seed(config.seed, &[TAG_HELD_OUT]))
}

/// Per-level RMS error of the surrogate against reference solves at each point.
pub fn held_out_table(surrogate: &Surrogate, solver: &dyn LevelSolver, zs: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    zs.par_iter()
        .map(|z| {
            let eval = surrogate_eval(surrogate, solver, z)?;
            let errs = (1..=surrogate.n_levels())
                .map(|i| {
                    let (truth, _) = solve_restricted(solver, z, &surrogate.grid, i)?;
                    let diff: Vec<f64> = eval.levels[i - 1].iter().zip(&truth.values).map(|(a, b)| a - b).collect();
                    Ok(rms(&diff))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((z.clone(), errs))
        })
        .collect()
}

fn write_errors_csv(mut out: impl Write, rows: &[(Vec<f64>, Vec<f64>)], n_levels: usize) -> Result<()> {
    let dim = rows.first().map_or(0, |(z, _)| z.len());
    let mut header: Vec<String> = (0..dim).map(|d| format!("z{d}")).collect();
    header.extend((1..=n_levels).map(|i| format!("level_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for (z, errs) in rows {
        let cols: Vec<String> = z.iter().chain(errs).map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", cols.join(","))?;
    }
    Ok(())
}
