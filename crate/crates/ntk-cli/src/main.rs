//! `ntk` — seeded experiment harness over the kernel library.
//!
//! Usage: `ntk <experiment> --config <path> [--seed U64] [--out PATH]
//! [--trials N] [--plot]`. The environment variable `NTK_THREADS` caps
//! parallelism (0 or unset = automatic). Exit codes: 0 success, 2 config
//! error, 3 numerical failure.

mod config;
mod experiments;
mod output;

use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use config::{build_plan, AppError, AppResult, Experiment, Overrides};

#[derive(Parser)]
#[command(
    name = "ntk",
    about = "Seeded kernel-spectrum experiments with deterministic CSV output"
)]
struct Cli {
    /// Experiment to run: limiting | empirical | bounds | convergence |
    /// sweep | hermite | lipschitz | memorize
    experiment: String,
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Also write a two-column plot series next to the output.
    #[arg(long)]
    plot: bool,
}

fn configure_threads() -> AppResult<()> {
    let Ok(raw) = std::env::var("NTK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| AppError::config(format!("NTK_THREADS must be an integer, got '{raw}'")))?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| AppError::config(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: &Cli) -> AppResult<()> {
    configure_threads()?;
    let experiment = Experiment::from_str(&cli.experiment)?;
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        AppError::config(format!("cannot read config '{}': {e}", cli.config.display()))
    })?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        trials: cli.trials,
        plot: cli.plot,
    };
    let plan = build_plan(&text, experiment, &overrides)?;
    let result = experiments::run(&plan)?;
    result.table.write(&plan.output_path)?;
    for line in &result.summaries {
        println!("{line}");
    }
    println!("wrote {} ({} rows)", plan.output_path.display(), result.table.n_rows());
    if plan.plot {
        let path = result.plot.write_next_to(&plan.output_path)?;
        println!("wrote {} ({} points)", path.display(), result.plot.points.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
