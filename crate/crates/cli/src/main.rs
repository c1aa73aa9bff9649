//! `skelfit`: fit skeletons to point clouds, perturb clouds, evaluate keypoints
//! and analyze nearest-distance histograms.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! divergence, 4 I/O error. Failures print one JSON object to stderr.

mod commands;
mod error;
mod files;
mod manifest;
mod svg;

use clap::{Parser, Subcommand};

use commands::{analyze, eval, fit, perturb};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "skelfit", version, about = "Skeleton fitting with the composite Chamfer distance")]
struct Cli {
    /// Worker threads; 0 lets the runtime decide
    #[arg(long, env = "SKELFIT_THREADS", default_value_t = 0, global = true)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a skeleton to one point cloud
    Fit(fit::FitArgs),
    /// Add Gaussian noise to a cloud or subsample it
    Perturb(perturb::PerturbArgs),
    /// Score keypoints with mIoU, DAS or repeatability
    Eval(eval::EvalArgs),
    /// Nearest-distance histograms of a cloud against its skeleton, keypoints and bbox samples
    Analyze(analyze::AnalyzeArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot size the thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Perturb(a) => perturb::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Analyze(a) => analyze::run(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = CliError::usage(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            std::process::exit(err.kind.exit_code());
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(err.kind.exit_code());
    }
}
