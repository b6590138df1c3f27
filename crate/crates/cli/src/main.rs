use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ironfi_cli::config::ExperimentConfig;
use ironfi_cli::{commands, selftest, CliError, Result};

#[derive(Parser)]
#[command(name = "ironfi", version, about = "Inexact resolvent ensemble experiments")]
struct Cli {
    /// Worker threads for particle updates; results do not depend on it.
    #[arg(long, global = true, env = "IRON_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the noise seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Ensemble on a quadratic: MSE decomposition, clouds, summary.
    QuadSim(RunArgs),
    /// Monte Carlo against the exact stationary MSE on a quadratic.
    QuadLyapunov(RunArgs),
    /// Logistic regression sweep over step size, tolerance and seed.
    LogregSweep(RunArgs),
    /// Particle clouds on the log-cosh objective.
    LogcoshSim(RunArgs),
    /// Built-in invariant checks.
    Selftest,
}

type Runner = fn(&ExperimentConfig, &Path) -> Result<Vec<PathBuf>>;

fn run(args: &RunArgs, runner: Runner) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out)?;
    for path in runner(&cfg, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::QuadSim(a) => run(a, commands::quad_sim)?,
        Command::QuadLyapunov(a) => run(a, commands::quad_lyapunov)?,
        Command::LogregSweep(a) => run(a, commands::logreg_sweep)?,
        Command::LogcoshSim(a) => run(a, commands::logcosh_sim)?,
        Command::Selftest => return Ok(selftest::selftest()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
