use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use latticepd::cli::{self, CliError, Overrides};

#[derive(Parser)]
#[command(
    name = "latticepd",
    version,
    about = "Spatial Prisoner's Dilemma with cost-accounted investment in cooperators"
)]
struct Args {
    /// Experiment file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override protocol.base_seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override output.dir
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scheme for protocol.replicates replicates
    Run,
    /// Run the (theta × threshold) grid from the [sweep] section
    Sweep,
    /// Check the closed-form investment thresholds against one-step simulations
    Verify {
        /// Temptation values, comma separated
        #[arg(long, value_delimiter = ',', default_values_t = [1.4, 1.6, 1.8, 2.0])]
        b: Vec<f64>,
        /// Theta values per b, evenly spaced inside (4b-5, 4b-1)
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Re-emit a stored grid snapshot
    Snapshot {
        path: PathBuf,
    },
}

fn require_config(config: &Option<PathBuf>) -> Result<&PathBuf, CliError> {
    config.as_ref().ok_or_else(|| {
        CliError::Config(latticepd::error::ConfigError::missing("--config"))
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        workers: args.workers,
    };
    let mut stdout = io::stdout().lock();
    let result = match &args.command {
        Command::Run => require_config(&args.config)
            .and_then(|p| cli::cmd_run(p, &overrides, &mut stdout).map(|_| ())),
        Command::Sweep => require_config(&args.config)
            .and_then(|p| cli::cmd_sweep(p, &overrides, &mut stdout).map(|_| ())),
        Command::Verify { b, points } => {
            cli::with_workers(args.workers, || cli::cmd_verify(b, *points, &mut io::stdout()))
                .and_then(|r| r)
        }
        Command::Snapshot { path } => cli::cmd_snapshot(path, &mut stdout),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
