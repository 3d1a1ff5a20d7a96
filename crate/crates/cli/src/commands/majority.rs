//! `bfkit majority`: bootstrap std of Majority@K accuracy over vote pools.

use std::path::PathBuf;

use clap::Args;

use bfkit_core::analysis::{majority_at_k_std, VotePool};

use crate::commands::parse_usize_list;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{fmt_f64, write_csv};

#[derive(Debug, Args)]
pub struct MajorityArgs {
    /// JSON array of {instance_id, gold, answers:[...]}.
    #[arg(long)]
    pub votes: PathBuf,
    /// Optional run config supplying the default seed and output directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "1,3,8,16")]
    pub ks: String,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 64)]
    pub samples_per_trial: usize,
    /// Bootstrap seed (default from config [run].seed, else 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "majority.csv")]
    pub out: PathBuf,
}

pub fn run(args: &MajorityArgs) -> Result<(), CliError> {
    let config = RunConfig::load_optional(args.config.as_deref())?;
    let seed = config.resolve_seed(args.seed);
    let text = std::fs::read_to_string(&args.votes)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.votes.display())))?;
    let pool: VotePool = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.votes.display())))?;
    let ks = parse_usize_list(&args.ks, "K")?;
    let stats = majority_at_k_std(&pool, &ks, args.trials, args.samples_per_trial, seed)
        .map_err(CliError::config)?;

    let comments = vec![format!(
        "trials={} samples_per_trial={} seed={}",
        args.trials, args.samples_per_trial, seed
    )];
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|(k, stat)| {
            vec![
                k.to_string(),
                fmt_f64(stat.mean_accuracy),
                fmt_f64(stat.std),
            ]
        })
        .collect();
    write_csv(&config.resolve_out(&args.out), &comments, &["K", "mean_acc", "std"], &rows)?;
    for (k, stat) in &stats {
        println!(
            "majority@{k}: mean accuracy {:.4}, std {:.4}",
            stat.mean_accuracy, stat.std
        );
    }
    Ok(())
}
