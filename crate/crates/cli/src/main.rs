use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ggrpo_cli::output::format_float;
use ggrpo_cli::{
    advantage_oneshot, run_experiment, CliError, ExperimentConfig, Mode, OneshotOptions,
};
use ggrpo_core::Estimator;

/// Rank-based advantage estimation experiments.
#[derive(Parser)]
#[command(name = "ggrpo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Train once per estimator with identical seeds and compare.
    Compare(RunArgs),
    /// Print the advantages of one reward group, one per line.
    Advantage(AdvantageArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AdvantageArgs {
    /// Comma-separated rewards.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    rewards: Vec<f64>,
    /// grpo, drgrpo, emagrpo or ggrpo.
    #[arg(long)]
    estimator: Estimator,
    #[arg(long)]
    ema_alpha: Option<f64>,
    #[arg(long)]
    ema_sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

fn run(args: RunArgs, force_compare: bool) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    if force_compare {
        cfg.mode = Mode::Compare;
    }
    let written = run_experiment(&cfg)?;
    eprintln!(
        "wrote {} files to {}",
        written.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args, false),
        Command::Compare(args) => run(args, true),
        Command::Advantage(a) => {
            let opts = OneshotOptions {
                ema_alpha: a.ema_alpha,
                ema_sigma: a.ema_sigma,
                epsilon: a.epsilon,
            };
            advantage_oneshot(&a.rewards, a.estimator, opts).map(|values| {
                for v in values {
                    println!("{}", format_float(v));
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
