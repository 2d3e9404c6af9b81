//! `colltest`: simulate Bertrand pricing data, estimate equilibrium
//! residuals, and test them for collusion.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use colltest_core::sim::Scenario;

pub use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "colltest", version, about)]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, value_name = "DIR", env = "COLLTEST_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an observation file (and true gaps for competitive data).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Number of observations.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the inverse problem to an observation file.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// CSV with header `p1,p2,mu`.
        observations: PathBuf,
        /// Normalization constants `m_1(1,1,0)` and `m_2(1,1,0)`.
        #[arg(long, value_delimiter = ',', num_args = 2, value_name = "C1,C2")]
        norm: Option<Vec<f64>>,
        /// Leave duals of interior prices free.
        #[arg(long)]
        no_slackness: bool,
    },
    /// Run the exponential goodness-of-fit test on residuals.
    Test {
        #[command(flatten)]
        common: Common,
        /// CSV with header `epsilon_hat`.
        #[arg(required_unless_present = "d_star")]
        residuals: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Decide from a precomputed statistic instead of a residual file.
        #[arg(long, requires = "n", conflicts_with = "residuals")]
        d_star: Option<f64>,
        /// Sample size belonging to `--d-star`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Simulate, estimate and test over sample sizes and replications.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Sample sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Empirical CDF points of a residual file, optionally with an
    /// exponential reference.
    PlotData {
        #[command(flatten)]
        common: Common,
        residuals: PathBuf,
        /// Rate of the reference exponential CDF.
        #[arg(long)]
        rate: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, scenario, n, seed } => commands::simulate(&common, scenario, n, seed),
        Command::Estimate { common, observations, norm, no_slackness } => {
            commands::estimate(&common, &observations, norm, no_slackness)
        }
        Command::Test { common, residuals, alpha, d_star, n } => {
            commands::test(&common, residuals.as_deref(), alpha, d_star, n)
        }
        Command::Experiment { common, scenario, n, replications, seed, alpha } => {
            commands::experiment(&common, scenario, n, replications, seed, alpha)
        }
        Command::PlotData { common, residuals, rate } => commands::plot_data(&common, &residuals, rate),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_target(false)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
