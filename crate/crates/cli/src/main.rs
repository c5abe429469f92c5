use beso_cli::commands::{self, CompareOptions, OracleName, Overrides, SweepParam};
use beso_cli::{exit_code, Outcome, RunConfig};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "beso", version, about = "Certified variational solutions of stochastic evolution equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding output.directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of Monte Carlo paths, overriding paths.n_paths
    #[arg(long)]
    paths: Option<usize>,
    /// Base seed, overriding paths.base_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Relative gap tolerance, overriding solver.tol_gap
    #[arg(long)]
    tol_gap: Option<f64>,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every path and write gap reports and trajectories
    Solve(Common),
    /// Run the property suites on the configured instance
    Validate(Common),
    /// Measure the solver against a reference under refinement
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        oracle: OracleName,
        /// Comma-separated time-step counts
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        /// Time steps of the reference path
        #[arg(long)]
        n_ref: Option<usize>,
        /// Comma-separated smoothing parameters
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Solve once per parameter value and join the reports
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn load(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&c.config)?;
    Overrides {
        out: c.out.clone(),
        paths: c.paths,
        seed: c.seed,
        tol_gap: c.tol_gap,
    }
    .apply(&mut cfg);
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Solve(c) => commands::cmd_solve(&load(&c)?, c.quiet),
        Command::Validate(c) => commands::cmd_validate(&load(&c)?, c.quiet),
        Command::Compare {
            common,
            oracle,
            levels,
            n_ref,
            eps,
        } => commands::cmd_compare(&load(&common)?, oracle, &CompareOptions { levels, n_ref, eps }, common.quiet),
        Command::Sweep { common, param, values } => commands::cmd_sweep(&load(&common)?, param, &values, common.quiet),
    }
}

fn main() {
    let result = run(Cli::parse());
    match &result {
        Ok(Outcome::ChecksFailed(msg)) => eprintln!("beso: {msg}"),
        Err(e) => eprintln!("beso: {e:#}"),
        Ok(Outcome::Success) => {}
    }
    std::process::exit(exit_code(&result));
}
