//! `bfkit`: branching-factor diagnostics for autoregressive generators.
//!
//! Exit codes: 0 success, 1 partial/failed, 2 config error, 3 endpoint
//! capability error, 4 estimation impossible.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod report;
mod svg;

use commands::{
    aep::AepArgs, bf::BfArgs, correlate::CorrelateArgs, diversity::DiversityArgs,
    majority::MajorityArgs, mink::MinkArgs, nudge::NudgeArgs, pareto::ParetoArgs,
    resample::ResampleArgs, sample::SampleArgs, trajectory::TrajectoryArgs,
};

#[derive(Parser)]
#[command(
    name = "bfkit",
    version,
    about = "Branching-factor diagnostics for autoregressive text generators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample completions with per-token logprobs into a trace file.
    Sample(SampleArgs),
    /// Estimate per-instance and task-level branching factor.
    Bf(BfArgs),
    /// Windowed BF over output positions with EMA smoothing.
    Trajectory(TrajectoryArgs),
    /// Pareto attribution of BF across impact factors.
    Pareto(ParetoArgs),
    /// Bootstrap std of Majority@K accuracy.
    Majority(MajorityArgs),
    /// Verify NLL concentration on a synthetic process.
    AepVerify(AepArgs),
    /// Dual-model nudging runs with ratio histogram.
    Nudge(NudgeArgs),
    /// Fork continuations at mid-generation positions.
    Resample(ResampleArgs),
    /// Distinct-N lexical diversity.
    Diversity(DiversityArgs),
    /// Min-K% contamination signal per trace.
    Mink(MinkArgs),
    /// Signed R² and Spearman between metric columns.
    Correlate(CorrelateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(args) => commands::sample::run(args),
        Command::Bf(args) => commands::bf::run(args),
        Command::Trajectory(args) => commands::trajectory::run(args),
        Command::Pareto(args) => commands::pareto::run(args),
        Command::Majority(args) => commands::majority::run(args),
        Command::AepVerify(args) => commands::aep::run(args),
        Command::Nudge(args) => commands::nudge::run(args),
        Command::Resample(args) => commands::resample::run(args),
        Command::Diversity(args) => commands::diversity::run(args),
        Command::Mink(args) => commands::mink::run(args),
        Command::Correlate(args) => commands::correlate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bfkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
