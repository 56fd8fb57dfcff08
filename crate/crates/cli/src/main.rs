//! Command-line runner: reproducible fits, dataset simulation, model
//! comparison, and plot-data emission.
//!
//! Every command is non-interactive and exits with a documented code:
//! 0 success, 1 validation/parse failure, 2 sampling or numerical failure,
//! 3 I/O failure. Internal parallelism is confined to sampler chains and
//! per-model comparison work; set `RAYON_NUM_THREADS` to bound the thread
//! pool.

mod comparecmd;
mod config;
mod plotdata;
mod rundir;
mod runner;
mod simulate;
mod svg;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use phylocorr::Error;

#[derive(Parser)]
#[command(
    name = "phylocorr",
    version,
    about = "Bayesian bivariate correlation models with family and phylogenetic dependency structures",
    after_help = "Exit codes: 1 validation, 2 sampling failure, 3 I/O failure."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model and write a self-describing run directory.
    Fit(runner::FitArgs),
    /// Draw a synthetic dataset from the generative model.
    Simulate(simulate::SimArgs),
    /// Compare two or more completed runs on the identical dataset.
    Compare(comparecmd::CompareArgs),
    /// Emit plot-ready CSV plus a minimal SVG from a completed run.
    Plotdata(plotdata::PlotArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes; everything else is a
            // validation failure (exit 1, not clap's default 2)
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Fit(args) => runner::run(args),
        Cmd::Simulate(args) => simulate::run(args),
        Cmd::Compare(args) => comparecmd::run(args),
        Cmd::Plotdata(args) => plotdata::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

/// Documented mapping from failure class to exit code.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Validation(_) => 1,
        Error::Numerical(_) | Error::Sampling(_) => 2,
        Error::Io(_) => 3,
    }
}
