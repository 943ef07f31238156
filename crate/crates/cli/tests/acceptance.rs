//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs every criterion by default; `cargo test --test acceptance -- 3 6` selects by number.
//! Criteria 6 to 8 run full surrogate builds on the advection-diffusion config and take minutes.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mlnn::mlsc::{compare_reports, run_mlsc, write_comparison_csv, CollocationGrid};
use mlnn::multilevel::{
    run_mlnn, sample_z, CostLedger, ErrorMap, LevelBuilder, RunConfig, TrainingSettings,
};
use mlnn::multilevel::surrogate::evaluate_chain;
use mlnn::nn::gradients;
use mlnn::pde::{
    exact_advection_diffusion, level_error, solve_advection_diffusion, solve_burgers, solve_restricted, theorem1_check,
    GridHierarchy, LevelSolver, NewtonConfig, ParameterDomain, Problem,
};
use mlnn::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn artifacts() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn ad_config() -> RunConfig {
    let path = workspace_root().join("configs/advection_diffusion.json");
    RunConfig::from_json(&std::fs::read_to_string(&path).expect("config")).expect("valid config")
}

fn solver_order() -> Outcome {
    let mut orders = Vec::new();
    for re in [1.0, 10.0, 100.0] {
        let errs: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&n| {
                let u = solve_advection_diffusion(re, n).unwrap().values;
                let exact: Vec<f64> = (0..=n).map(|j| exact_advection_diffusion(j as f64 / n as f64, re)).collect();
                max_abs(&diff(&u, &exact))
            })
            .collect();
        orders.extend(errs.windows(2).map(|w| (w[0] / w[1]).log2()));
    }
    let ok = orders.iter().all(|p| (1.85..=2.15).contains(p));
    check(ok, format!("orders {}", fmt_list(&orders)))
}

fn burgers_correctness() -> Outcome {
    let newton = NewtonConfig::default();
    let sol = solve_burgers(1000.0, 300, &newton).map_err(|e| e.to_string())?;
    let residual = *sol.residual_history.last().unwrap();
    // N = 2^15 is not nested with N = 300; 300 * 2^7 = 38400 is the nested reference of that size
    let reference = solve_burgers(1000.0, 300 << 7, &newton).map_err(|e| e.to_string())?.values;
    let errs: Vec<f64> = (0..5)
        .map(|k| {
            let n = 300 << k;
            let u = solve_burgers(1000.0, n, &newton).unwrap().values;
            let stride = (300 << 7) / n;
            let r: Vec<f64> = (0..=n).map(|j| reference[j * stride]).collect();
            max_abs(&diff(&u, &r))
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let ok = residual <= 1e-12 && sol.iterations <= 20 && orders.iter().all(|p| (1.8..=2.2).contains(p));
    check(
        ok,
        format!("||F||_inf {residual:.2e} after {} iterations; orders {}", sol.iterations, fmt_list(&orders)),
    )
}

struct OracleMap<'a> {
    solver: &'a dyn LevelSolver,
    grid: GridHierarchy,
    level: usize,
}

impl ErrorMap for OracleMap<'_> {
    fn correction(&self, _input: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let (fine, _) = solve_restricted(self.solver, z, &self.grid, self.level)?;
        let (coarse, _) = solve_restricted(self.solver, z, &self.grid, self.level - 1)?;
        level_error(&fine, &coarse)
    }
}

fn telescoping() -> Outcome {
    let problem = Problem::AdvectionDiffusion;
    let domain = ParameterDomain::new(vec![1.0], vec![100.0]).unwrap();
    let grid = GridHierarchy::new(100, 5).unwrap();
    let oracles: Vec<OracleMap> = (2..=5).map(|level| OracleMap { solver: &problem, grid, level }).collect();
    let maps: Vec<&dyn ErrorMap> = oracles.iter().map(|o| o as &dyn ErrorMap).collect();
    let mut worst = 0.0f64;
    for z in sample_z(&domain, 20, 3) {
        let eval = evaluate_chain(&problem, &grid, &domain, &maps, &z).map_err(|e| e.to_string())?;
        let (truth, _) = solve_restricted(&problem, &z, &grid, 5).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs(&diff(&eval.values, &truth.values)));
    }
    check(worst <= 1e-12, format!("max |surrogate - u5| = {worst:.2e} over 20 z"))
}

fn similarity() -> Outcome {
    let rho = |n1| theorem1_check(&Problem::AdvectionDiffusion, &[10.0], &GridHierarchy::new(n1, 3).unwrap(), 2);
    let (a, b) = (rho(100).map_err(|e| e.to_string())?, rho(200).map_err(|e| e.to_string())?);
    check(a <= 0.2 && b < a, format!("rho(N1=100) = {a:.3e}, rho(N1=200) = {b:.3e}"))
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..20 {
        let (net, batch, lambda) = support::random_case(1000 + seed);
        let g = gradients(&net, &batch, lambda).map_err(|e| e.to_string())?;
        let report = support::finite_difference_check(&net, &batch, lambda, &g, 1e-5);
        if report.skipped_kinks > 0 {
            return Err(format!("case {seed}: {} components straddle a ReLU kink", report.skipped_kinks));
        }
        worst = worst.max(report.max_rel);
        checked += report.checked;
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} over {checked} components"))
}

fn end_to_end() -> Outcome {
    let run = run_mlnn(&ad_config(), Some(&artifacts().join("advection_diffusion"))).map_err(|e| e.to_string())?;
    let r = &run.report;
    let held = r.held_out.as_ref().ok_or("no held-out points")?;
    let worst = *held.max_rms_per_level.last().unwrap();
    let samples = r.samples_per_level();
    // samples_per_level()[0] is level 2
    let monotone = samples.iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| w[1] <= w[0]);
    let ok = r.n_levels >= 4 && worst <= 1e-4 && monotone;
    check(
        ok,
        format!(
            "N_L = {} ({}), max held-out RMS {worst:.3e}, samples per level {:?}, per-level max RMS {}",
            r.n_levels,
            r.stop_reason,
            samples,
            fmt_list(&held.max_rms_per_level)
        ),
    )
}

fn level_three_solves(seed: u64) -> std::result::Result<(usize, bool, usize, bool), String> {
    let cfg = ad_config();
    let builder = |transfer| LevelBuilder {
        solver: &cfg.problem,
        grid: GridHierarchy::new(cfg.n1, 3).unwrap(),
        domain: cfg.domain.clone(),
        hyper: cfg.hyper_grid(),
        settings: TrainingSettings { train: cfg.training.clone(), filters_first_layer: cfg.filters_first_layer, transfer },
        epsilon: cfg.epsilon,
        max_rounds: cfg.max_rounds,
        seed,
    };
    let mut ledger = CostLedger::default();
    let p2 = builder(true).enrich_until_valid(2, &[], &mut ledger).map_err(|e| e.to_string())?;
    let maps = [p2.network];
    let level3 = |transfer| -> std::result::Result<(usize, bool), String> {
        let mut ledger = CostLedger::default();
        match builder(transfer).enrich_until_valid(3, &maps, &mut ledger) {
            Ok(_) => Ok((ledger.solves_at(3), true)),
            Err(Error::MaxRounds { .. }) => Ok((ledger.solves_at(3), false)),
            Err(e) => Err(e.to_string()),
        }
    };
    let (t, t_ok) = level3(true)?;
    let (f, f_ok) = level3(false)?;
    Ok((t, t_ok, f, f_ok))
}

fn transfer_benefit() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3 {
        let (t, t_ok, f, f_ok) = level_three_solves(seed)?;
        ok &= t_ok && t <= f;
        let tag = |reached| if reached { "" } else { " (not reached)" };
        parts.push(format!("seed {seed}: transfer {t}{}, fresh {f}{}", tag(t_ok), tag(f_ok)));
    }
    check(ok, format!("level-3 solves: {}", parts.join("; ")))
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn mlsc_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let domain = ParameterDomain::new(vec![-1.0], vec![1.0]).unwrap();
    let mut poly_err = 0.0f64;
    for m in 1..=6 {
        let grid = CollocationGrid::new(m, &domain).unwrap();
        for _ in 0..5 {
            let coeffs: Vec<f64> = (0..=(1usize << m)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let values: Vec<Vec<f64>> = grid.points().iter().map(|p| vec![poly(&coeffs, p[0])]).collect();
            for _ in 0..20 {
                let x = rng.random_range(-1.0..1.0);
                poly_err = poly_err.max((grid.interpolate(&values, &[x]).unwrap()[0] - poly(&coeffs, x)).abs());
            }
        }
    }

    // the comparison needs a finished network build; three levels keep it independent of criterion 6
    let mut cfg = ad_config();
    cfg.max_levels = 3;
    let out = artifacts().join("comparison");
    let mlsc = run_mlsc(&cfg, Some(&out)).map_err(|e| e.to_string())?;
    let held = mlsc.report.levels.last().and_then(|l| l.held_out_max_rms).ok_or("no held-out points")?;
    let mlnn = run_mlnn(&cfg, Some(&out)).map_err(|e| e.to_string())?;
    let rows = compare_reports(&mlnn.report, &mlsc.report).map_err(|e| e.to_string())?;
    let file = std::fs::File::create(out.join("comparison.csv")).map_err(|e| e.to_string())?;
    write_comparison_csv(file, &rows).map_err(|e| e.to_string())?;
    let peak = rows.iter().map(|r| r.mlsc_solver_normalized).fold(0.0, f64::max);
    let combined = rows.iter().map(|r| r.mlsc_combined_normalized).fold(0.0, f64::max);
    let ok = poly_err <= 1e-12 && held <= 1e-6 && !rows.is_empty() && peak == 1.0 && combined == 1.0;
    check(
        ok,
        format!(
            "polynomial error {poly_err:.2e}, collocation held-out max RMS {held:.2e}, {} comparison rows, \
             collocation peak normalized cost {peak} (combined {combined})",
            rows.len()
        ),
    )
}

fn cli(args: &[&str]) -> std::result::Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_mlnn"))
        .args(["--log-level", "warn"])
        .args(args)
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("mlnn {} exited with {status}", args.join(" ")))
    }
}

fn read(path: &Path) -> std::result::Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn without_timing(path: &Path) -> std::result::Result<serde_json::Value, String> {
    let mut v: serde_json::Value = serde_json::from_slice(&read(path)?).map_err(|e| e.to_string())?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
        if let Some(levels) = obj.get_mut("levels").and_then(|l| l.as_array_mut()) {
            for l in levels {
                if let Some(l) = l.as_object_mut() {
                    l.remove("cumulative_solve_seconds");
                }
            }
        }
    }
    Ok(v)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    let text = serde_json::json!({
        "problem": { "kind": "burgers" },
        "domain": { "lower": [1.0], "upper": [10.0] },
        "n1": 16,
        "max_levels": 3,
        "epsilon": 1e-6,
        "epsilon_acc": 1e-12,
        "seed": 11,
        "filters_first_layer": 2,
        "training": { "max_epochs": 400, "plateau_patience": 50 },
        "grid": { "lambda": [0.0, 1e-6], "n_cnn": [1], "n_fc": [1], "width": [4, 8] },
        "max_rounds": 3,
        "held_out": 5
    });
    std::fs::write(&config, text.to_string()).map_err(|e| e.to_string())?;
    let run = |tag: &str| -> std::result::Result<PathBuf, String> {
        let out = dir.path().join(tag);
        let o = out.to_str().unwrap();
        let c = config.to_str().unwrap();
        cli(&["run-mlnn", "--config", c, "--out", &format!("{o}/mlnn"), "--jobs", "2"])?;
        cli(&["run-mlsc", "--config", c, "--out", &format!("{o}/mlsc")])?;
        cli(&["compare", "--mlnn", &format!("{o}/mlnn/report.json"), "--mlsc", &format!("{o}/mlsc/mlsc_report.json"), "--out", &format!("{o}/compare")])?;
        cli(&["convergence", "--problem", "burgers", "--z", "50", "--n", "50,100,200", "--out", &format!("{o}/convergence")])?;
        cli(&["theorem1", "--problem", "advection-diffusion", "--z", "10", "--n1", "50,100", "--out", &format!("{o}/theorem1")])?;
        Ok(out)
    };
    let (a, b) = (run("a")?, run("b")?);
    let mut compared = 0;
    for json in ["mlnn/report.json", "mlsc/mlsc_report.json"] {
        if without_timing(&a.join(json))? != without_timing(&b.join(json))? {
            return Err(format!("{json} differs between reruns"));
        }
        compared += 1;
    }
    let mut exact = vec!["mlnn/errors.csv".to_string(), "convergence/convergence.csv".into(), "theorem1/theorem1.csv".into()];
    for entry in std::fs::read_dir(a.join("mlnn/checkpoints")).map_err(|e| e.to_string())? {
        exact.push(format!("mlnn/checkpoints/{}", entry.map_err(|e| e.to_string())?.file_name().to_string_lossy()));
    }
    for file in &exact {
        if read(&a.join(file))? != read(&b.join(file))? {
            return Err(format!("{file} differs between reruns"));
        }
        compared += 1;
    }
    // comparison.csv carries wall-clock columns; rerunning compare on the same reports is exact
    cli(&["compare", "--mlnn", &format!("{}/mlnn/report.json", a.display()), "--mlsc", &format!("{}/mlsc/mlsc_report.json", a.display()), "--out", &format!("{}/compare2", a.display())])?;
    if read(&a.join("compare/comparison.csv"))? != read(&a.join("compare2/comparison.csv"))? {
        return Err("comparison.csv differs between reruns".into());
    }
    compared += 1;
    Ok(format!("{compared} artifacts identical across reruns"))
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id| selected.is_empty() || selected.contains(&id);

    let criteria = [
        Criterion { id: 1, name: "advection-diffusion solver order", limit: Some(Duration::from_secs(1)) },
        Criterion { id: 2, name: "Burgers Newton and self-convergence", limit: Some(Duration::from_secs(10)) },
        Criterion { id: 3, name: "telescoping with exact error maps", limit: Some(Duration::from_secs(5)) },
        Criterion { id: 4, name: "inter-level error similarity", limit: Some(Duration::from_secs(2)) },
        Criterion { id: 5, name: "gradient check", limit: Some(Duration::from_secs(30)) },
        Criterion { id: 6, name: "end-to-end advection-diffusion surrogate", limit: Some(Duration::from_secs(1800)) },
        Criterion { id: 7, name: "transfer-learning benefit", limit: None },
        Criterion { id: 8, name: "collocation baseline and comparison", limit: None },
        Criterion { id: 9, name: "determinism", limit: None },
    ];
    let mut failures = 0;
    for c in criteria.iter().filter(|c| wanted(c.id)) {
        let start = Instant::now();
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| match c.id {
            1 => solver_order(),
            2 => burgers_correctness(),
            3 => telescoping(),
            4 => similarity(),
            5 => gradient_check(),
            6 => end_to_end(),
            7 => transfer_benefit(),
            8 => mlsc_sanity(),
            9 => determinism(),
            _ => unreachable!(),
        }))
        .unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let over = c.limit.is_some_and(|l| elapsed > l);
        let (status, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; runtime over {:?}", c.limit.unwrap())),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("criterion {} ({}): {status} [{:.1}s] {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
