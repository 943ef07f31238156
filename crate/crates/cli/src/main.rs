mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};


#[derive(Parser)]
#[command(name = "mlnn", version, about = "Multi-level neural-network surrogates for parametric PDEs")]
struct Cli {
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Caps concurrent solver and training tasks.
    #[arg(long, env = "MLNN_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build an MLNN surrogate; writes report.json, errors.csv and checkpoints/.
    RunMlnn(RunArgs),
    /// Build the multi-level collocation baseline; writes mlsc_report.json.
    RunMlsc(RunArgs),
    /// Merge an MLNN and an MLSC report into comparison.csv.
    Compare {
        #[arg(long)]
        mlnn: PathBuf,
        #[arg(long)]
        mlsc: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-convergence table; writes convergence.csv.
    Convergence {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        z: f64,
        /// Interval counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Similarity defect of successive inter-level errors; writes theorem1.csv.
    Theorem1 {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        z: f64,
        /// Coarse interval counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        n1: Vec<usize>,
        /// Discretization order d.
        #[arg(long, default_value_t = 2)]
        order: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let result = match cli.command {
        Command::RunMlnn(args) => commands::run_mlnn(&args),
        Command::RunMlsc(args) => commands::run_mlsc(&args),
        Command::Compare { mlnn, mlsc, out } => commands::compare(&mlnn, &mlsc, &out),
        Command::Convergence { problem, z, n, out } => commands::convergence(&problem, z, &n, &out),
        Command::Theorem1 { problem, z, n1, order, out } => commands::theorem1(&problem, z, &n1, order, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
