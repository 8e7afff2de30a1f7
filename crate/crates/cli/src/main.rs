//! `medial` — batch driver for the skeleton-driven reconstruction pipeline.
//!
//! Subcommands cover each stage (`skeletonize`, `fit`), the end-to-end
//! `reconstruct`, the metric batteries (`eval`, `eval-embeddings`), the
//! sampler demo, and `info`. Exit codes: 0 success, 2 usage or precondition
//! problem, 3 runtime failure. Every command is deterministic given its
//! config and seed; failed commands remove their partial outputs.

mod commands;
mod config;
mod stages;
mod util;

use clap::Parser;

use util::CliResult;

#[derive(Debug, Parser)]
#[command(name = "medial", version, about = "Medial-skeleton surface pipeline")]
struct Cli {
    /// Cap the global worker thread count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Extract a medial point skeleton from a mesh.
    Skeletonize(commands::skeletonize::Args),
    /// Fit directional radius tables to an existing skeleton.
    Fit(commands::fit::Args),
    /// Run the full skeleton -> envelopes -> marching-cubes pipeline.
    Reconstruct(commands::reconstruct::Args),
    /// Set-level shape metrics between two mesh directories.
    Eval(commands::eval::Args),
    /// FID/KID/precision/recall between two embedding files.
    EvalEmbeddings(commands::eval_embeddings::Args),
    /// Probability-flow sampler demo on analytic denoisers.
    SampleDemo(commands::sample_demo::Args),
    /// Show the resolved configuration and build constants.
    Info(commands::info::Args),
}

fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::Skeletonize(args) => commands::skeletonize::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Reconstruct(args) => commands::reconstruct::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::EvalEmbeddings(args) => commands::eval_embeddings::run(args),
        Command::SampleDemo(args) => commands::sample_demo::run(args),
        Command::Info(args) => commands::info::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {} threads: {}", threads, e);
            std::process::exit(3);
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e);
            std::process::exit(e.exit_code());
        }
    }
}
