use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlupdate_cli::commands::{self, Layout};
use nlupdate_cli::{CliError, Overrides, RunConfig};

/// Bayesian updating of nonlinear oscillator models from ensembles of
/// backbone curves.
#[derive(Parser)]
#[command(name = "nlupdate", version, about)]
struct Cli {
    /// Worker threads for simulation and chains (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config, or a JSON manifest written by a previous run.
    #[arg(long, short)]
    config: PathBuf,

    /// Output directory, overriding `[output] dir`.
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Seed for the measurement ensemble and the first chain.
    #[arg(long)]
    seed: Option<u64>,

    /// Number of chains, overriding `[mcmc] chains`.
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the measured ensemble from `[truth]`.
    Generate(Common),
    /// Extract backbone curves from free-decay time-series CSVs.
    Extract {
        #[command(flatten)]
        common: Common,
        /// `t_s,x_m` CSV files or directories of them.
        #[arg(long, short, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
    /// Fit the slice densities of the measured ensemble.
    BuildLikelihood(Common),
    /// Run the Metropolis-Hastings chains.
    Sample(Common),
    /// Summaries, diagnostics and plots from stored chains.
    Report(Common),
    /// generate, build-likelihood, sample and report in one go.
    Pipeline(Common),
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        out: common.out.clone(),
        seed: common.seed,
        chains: common.chains,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(cfg: &RunConfig) {
    let path = Layout::new(cfg).report().join("summary.txt");
    if let Ok(text) = std::fs::read_to_string(path) {
        print!("{text}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Generate(c) => {
            commands::generate(&load(&c)?)?;
        }
        Command::Extract { common, input } => {
            commands::extract(&load(&common)?, &input)?;
        }
        Command::BuildLikelihood(c) => {
            commands::build_likelihood(&load(&c)?)?;
        }
        Command::Sample(c) => {
            commands::sample(&load(&c)?)?;
        }
        Command::Report(c) => {
            let cfg = load(&c)?;
            commands::report(&cfg)?;
            print_summary(&cfg);
        }
        Command::Pipeline(c) => {
            let cfg = load(&c)?;
            commands::pipeline(&cfg)?;
            print_summary(&cfg);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
