use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use molres::experiment::{self, ExperimentConfig, Mode};
use molres::Error;

#[derive(Parser)]
#[command(
    name = "molres",
    version,
    about = "Molecular-channel reservoir computing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one parameter set on one task.
    Evaluate(RunArgs),
    /// Bayesian optimization of the channel parameters for one task.
    Optimize(RunArgs),
    /// Every parameter set against every task.
    Crisscross(RunArgs),
    /// Deterministic, raw stochastic and filtered stochastic scores.
    StochasticCompare(RunArgs),
    /// Stochastic scores over a list of moving-average windows.
    FilterSweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the optimizer and the particle engine; overrides the
    /// configuration's `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(mode: Mode, args: &RunArgs) -> Result<experiment::ExperimentResult, Error> {
    let config = ExperimentConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(config.rng_seed);
    let base = args.config.parent();
    experiment::run(&config, mode, &args.out, seed, base).map_err(|e| match e {
        Error::Config { path, message } if path.as_os_str().is_empty() => Error::Config {
            path: args.config.clone(),
            message,
        },
        other => other,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Evaluate(a) => (Mode::Evaluate, a),
        Command::Optimize(a) => (Mode::Optimize, a),
        Command::Crisscross(a) => (Mode::Crisscross, a),
        Command::StochasticCompare(a) => (Mode::StochasticCompare, a),
        Command::FilterSweep(a) => (Mode::FilterSweep, a),
    };
    match execute(mode, args) {
        Ok(result) => {
            let summary = serde_json::json!({
                "mode": result.mode,
                "nrmse_det": result.nrmse_det,
                "nrmse_stoch_raw": result.nrmse_stoch_raw,
                "nrmse_stoch_filtered": result.nrmse_stoch_filtered,
                "best": result.best.as_ref().map(|b| b.nrmse),
                "out": args.out,
            });
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
