//! `ebmss`: synchronize anomaly series, fit the energy balance state-space
//! model, run the recovery Monte Carlo, project scenarios and run unit-root
//! diagnostics.

mod commands;
mod error;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{FitFlags, ProjectArgs, SimulateArgs};
use error::{CliError, CliResult};
use manifest::{parse_quantiles, parse_years};

#[derive(Parser)]
#[command(name = "ebmss", version, about = "Energy balance state-space model pipeline")]
struct Cli {
    /// Worker threads for simulate and project (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Probability levels given as one comma-separated value.
#[derive(Clone)]
struct Quantiles(Vec<f64>);

fn quantile_list(s: &str) -> Result<Quantiles, String> {
    parse_quantiles(s).map(Quantiles)
}

#[derive(Args, Clone)]
struct FitArgs {
    /// Optimizer restarts after the first run.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Likelihood evaluations per optimizer run.
    #[arg(long, default_value_t = 20_000)]
    max_evals: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Bring every manifest series to the pre-industrial baseline.
    Sync {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-likelihood fit with standard errors and residual diagnostics.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        /// Sample range, e.g. 1955:2020.
        #[arg(long, value_parser = parse_years)]
        years: (i32, i32),
        #[arg(long)]
        out: PathBuf,
        /// Seed of the optimizer restarts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the Hessian and standard errors.
        #[arg(long)]
        no_se: bool,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Parameter-recovery Monte Carlo at the reference parameter values.
    Simulate {
        /// Table with columns year, natural, anthropogenic.
        #[arg(long)]
        forcing: PathBuf,
        #[arg(long, value_parser = parse_years)]
        years: Option<(i32, i32)>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// GMST series in the full configuration.
        #[arg(long, default_value_t = 8)]
        gmst: usize,
        /// Ocean temperature/OHC pairs in the full configuration.
        #[arg(long, default_value_t = 2)]
        pairs: usize,
        /// Keep trajectories whose anthropogenic forcing reaches this share
        /// of the reference mid-sample and at the end; 0 disables.
        #[arg(long, default_value_t = ebmss::simulation::DEFAULT_ACCEPT_FRACTION)]
        accept_fraction: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Temperature fans under forcing scenarios with parameter uncertainty.
    Project {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_years)]
        years: (i32, i32),
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = ebmss::projection::DEFAULT_DRAWS)]
        draws: usize,
        /// Table with columns year, forcing; repeatable.
        #[arg(long = "scenario", required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, value_parser = quantile_list, default_value = "0.05,0.5,0.95")]
        quantiles: Quantiles,
        /// Reuse fit.json from `ebmss fit` instead of refitting.
        #[arg(long)]
        fit_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// ADF unit-root tables for levels and first differences.
    Diagnose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_years)]
        years: (i32, i32),
        #[arg(long, default_value_t = ebmss::diagnostics::DEFAULT_MAX_LAG)]
        max_lag: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn flags(seed: u64, f: &FitArgs) -> FitFlags {
    FitFlags {
        seed,
        restarts: f.restarts,
        max_evals: f.max_evals,
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::input("--workers must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Sync { manifest, out } => commands::sync(&manifest, &out),
        Command::Fit {
            manifest,
            years,
            out,
            seed,
            no_se,
            fit,
        } => commands::fit(&manifest, years, &flags(seed, &fit), !no_se, &out),
        Command::Simulate {
            forcing,
            years,
            seed,
            reps,
            gmst,
            pairs,
            accept_fraction,
            out,
            fit,
        } => {
            if reps == 0 {
                return Err(CliError::input("--reps must be positive"));
            }
            if !(0.0..=1.0).contains(&accept_fraction) {
                return Err(CliError::input("--accept-fraction must lie in [0, 1]"));
            }
            let args = SimulateArgs {
                forcing,
                years,
                seed,
                reps,
                n_gmst: gmst,
                n_pairs: pairs,
                accept_fraction: (accept_fraction > 0.0).then_some(accept_fraction),
                fit: flags(seed, &fit),
            };
            commands::simulate(&args, &out)
        }
        Command::Project {
            manifest,
            years,
            seed,
            draws,
            scenarios,
            quantiles,
            fit_file,
            out,
            fit,
        } => {
            if draws == 0 {
                return Err(CliError::input("--draws must be positive"));
            }
            let args = ProjectArgs {
                manifest,
                years,
                seed,
                draws,
                scenarios,
                quantiles: quantiles.0,
                fit_file,
                fit: flags(0, &fit),
            };
            commands::project(&args, &out)
        }
        Command::Diagnose {
            manifest,
            years,
            max_lag,
            out,
        } => commands::diagnose(&manifest, years, max_lag, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
