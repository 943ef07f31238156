use std::fmt;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use mlnn::mlsc::{compare_reports, run_mlsc as build_mlsc_run, write_comparison_csv, MlscReport};
use mlnn::multilevel::{run_mlnn as build_mlnn_run, RunConfig, RunReport};
use mlnn::pde::archive::fmt_f64;
use mlnn::pde::{exact_advection_diffusion, theorem1_check, GridHierarchy, LevelSolver, NewtonConfig, Problem};

use crate::manifest::RunManifest;
use crate::RunArgs;

/// Self-convergence references are this many doublings finer than the finest requested grid.
const REFERENCE_DOUBLINGS: u32 = 7;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid config: exit code 2.
    Usage(String),
    /// The run itself failed: exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))
}

fn load_config(args: &RunArgs) -> Result<(RunConfig, String), CliError> {
    let text = read(&args.config)?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((cfg, text))
}

fn start(command: &str, args: &RunArgs) -> Result<RunConfig, CliError> {
    let (cfg, text) = load_config(args)?;
    prepare_out(&args.out)?;
    RunManifest::new(command, Some(&args.config), text.as_bytes(), Some(cfg.seed), &args.out).save().map_err(runtime)?;
    Ok(cfg)
}

pub fn run_mlnn(args: &RunArgs) -> Result<(), CliError> {
    let cfg = start("run-mlnn", args)?;
    let run = build_mlnn_run(&cfg, Some(&args.out)).map_err(runtime)?;
    info!("surrogate has {} levels ({})", run.report.n_levels, run.report.stop_reason);
    if let Some(h) = &run.report.held_out {
        info!("held-out max RMS per level: {:?}", h.max_rms_per_level);
    }
    Ok(())
}

pub fn run_mlsc(args: &RunArgs) -> Result<(), CliError> {
    let cfg = start("run-mlsc", args)?;
    let run = build_mlsc_run(&cfg, Some(&args.out)).map_err(runtime)?;
    for l in &run.report.levels {
        info!("level {}: collocation level {} ({} nodes)", l.level, l.cc_level, l.nodes);
    }
    Ok(())
}

fn load_report<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn compare(mlnn: &Path, mlsc: &Path, out: &Path) -> Result<(), CliError> {
    let a: RunReport = load_report(mlnn)?;
    let b: MlscReport = load_report(mlsc)?;
    let rows = compare_reports(&a, &b).map_err(|e| CliError::Usage(e.to_string()))?;
    prepare_out(out)?;
    let args = serde_json::json!({ "mlnn": mlnn, "mlsc": mlsc });
    RunManifest::new("compare", None, args.to_string().as_bytes(), Some(a.seed), out).save().map_err(runtime)?;
    let file = std::fs::File::create(out.join("comparison.csv")).map_err(runtime)?;
    write_comparison_csv(file, &rows).map_err(runtime)
}

fn parse_problem(name: &str) -> Result<Problem, CliError> {
    match name {
        "advection-diffusion" | "ad" => Ok(Problem::AdvectionDiffusion),
        "burgers" => Ok(Problem::Burgers { newton: NewtonConfig::default() }),
        other => Err(CliError::Usage(format!("unknown problem '{other}' (expected advection-diffusion or burgers)"))),
    }
}

fn check_sizes(name: &str, ns: &[usize]) -> Result<(), CliError> {
    if ns.is_empty() {
        return Err(CliError::Usage(format!("--{name} needs at least one value")));
    }
    if ns.iter().any(|&n| n < 2) {
        return Err(CliError::Usage(format!("--{name} values must be at least 2")));
    }
    Ok(())
}

fn max_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Max-norm error of the solution on `n` intervals against `reference` (given on `n_ref`
/// intervals) or, if `reference` is `None`, against the closed form.
fn convergence_error(problem: &Problem, z: f64, n: usize, reference: Option<&(usize, Vec<f64>)>) -> mlnn::Result<f64> {
    let u = problem.solve(&[z], n)?.values;
    match reference {
        None => {
            let exact: Vec<f64> = (0..=n).map(|j| exact_advection_diffusion(j as f64 / n as f64, z)).collect();
            Ok(max_error(&u, &exact))
        }
        Some((n_ref, r)) => {
            if n_ref % n != 0 || !(n_ref / n).is_power_of_two() {
                return Err(mlnn::Error::InvalidInput(format!("N = {n} is not nested in the reference grid N = {n_ref}")));
            }
            let stride = n_ref / n;
            let restricted: Vec<f64> = (0..=n).map(|j| r[j * stride]).collect();
            Ok(max_error(&u, &restricted))
        }
    }
}

pub fn convergence(problem: &str, z: f64, ns: &[usize], out: &Path) -> Result<(), CliError> {
    let p = parse_problem(problem)?;
    check_sizes("n", ns)?;
    prepare_out(out)?;
    let args = serde_json::json!({ "problem": problem, "z": z, "n": ns });
    RunManifest::new("convergence", None, args.to_string().as_bytes(), None, out).save().map_err(runtime)?;

    let reference = match p {
        Problem::AdvectionDiffusion => None,
        Problem::Burgers { .. } => {
            let n_ref = ns.iter().max().unwrap() << REFERENCE_DOUBLINGS;
            let r = p.solve(&[z], n_ref).map_err(runtime)?;
            Some((n_ref, r.values))
        }
    };
    let mut csv = String::from("n,error,order,status\n");
    let mut prev: Option<(usize, f64)> = None;
    for &n in ns {
        match convergence_error(&p, z, n, reference.as_ref()) {
            Ok(err) => {
                let order = match prev {
                    Some((n0, e0)) if n0 != n => fmt_f64((e0 / err).ln() / (n as f64 / n0 as f64).ln()),
                    _ => String::new(),
                };
                csv.push_str(&format!("{n},{},{order},ok\n", fmt_f64(err)));
                prev = Some((n, err));
            }
            Err(e) => {
                warn!("N = {n}: {e}");
                csv.push_str(&format!("{n},,,\"{}\"\n", e.to_string().replace('"', "'")));
                prev = None;
            }
        }
    }
    write_file(&out.join("convergence.csv"), &csv)
}

pub fn theorem1(problem: &str, z: f64, n1s: &[usize], order: u32, out: &Path) -> Result<(), CliError> {
    let p = parse_problem(problem)?;
    check_sizes("n1", n1s)?;
    prepare_out(out)?;
    let args = serde_json::json!({ "problem": problem, "z": z, "n1": n1s, "order": order });
    RunManifest::new("theorem1", None, args.to_string().as_bytes(), None, out).save().map_err(runtime)?;

    let mut csv = String::from("n1,h,rho,status\n");
    for &n1 in n1s {
        let h = fmt_f64(1.0 / n1 as f64);
        let row = GridHierarchy::new(n1, 3).and_then(|grid| theorem1_check(&p, &[z], &grid, order));
        match row {
            Ok(rho) => csv.push_str(&format!("{n1},{h},{},ok\n", fmt_f64(rho))),
            Err(e) => {
                warn!("N1 = {n1}: {e}");
                csv.push_str(&format!("{n1},{h},,\"{}\"\n", e.to_string().replace('"', "'")));
            }
        }
    }
    write_file(&out.join("theorem1.csv"), &csv)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(runtime)?;
    f.write_all(text.as_bytes()).map_err(runtime)
}
