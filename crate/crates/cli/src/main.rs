use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sbv_cli::commands;

/// Scaled block Vecchia Gaussian-process emulation.
#[derive(Parser)]
#[command(name = "sbv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a zero-mean GP dataset and write it as CSV.
    Simulate {
        /// Flat key=value config (n, d, seed, sigma2, tau2, nu, beta).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit kernel hyperparameters by maximum likelihood.
    Fit {
        /// Training data CSV (header `x1,...,xd,y`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Where to write the key=value fit report.
        #[arg(long)]
        report: PathBuf,
        /// Objective trace CSV (default: report path with .trace.csv).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Simulated worker count, overriding the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Outer preprocessing rounds (rebuild blocks from the current
        /// ranges between rounds).
        #[arg(long = "refit-preprocess")]
        refit_preprocess: Option<usize>,
    },
    /// Predict at new inputs using a fit report.
    Predict {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Fit report produced by `sbv fit`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (`mean,sd,ci_lo,ci_hi` per test row).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sweep variants x conditioning sizes x seeds on a synthetic truth.
    Benchmark {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Verify the filtered neighbor search against the exhaustive oracle.
    NnsCheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config, out } => commands::cmd_simulate(&config, &out),
        Command::Fit {
            data,
            config,
            report,
            trace,
            workers,
            refit_preprocess,
        } => commands::cmd_fit(
            &data,
            &config,
            &report,
            trace.as_deref(),
            workers,
            refit_preprocess,
        ),
        Command::Predict {
            train,
            test,
            report,
            config,
            out,
            workers,
        } => commands::cmd_predict(&train, &test, &report, &config, &out, workers),
        Command::Benchmark { scenario, out_dir } => commands::cmd_benchmark(&scenario, &out_dir),
        Command::NnsCheck { data, config } => commands::cmd_nns_check(&data, &config),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
