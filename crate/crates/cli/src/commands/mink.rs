//! `bfkit mink`: Min-K% contamination signal per trace from chosen-token
//! raw logprobs.

use std::path::PathBuf;

use clap::Args;

use bfkit_core::analysis::min_k_percent;

use crate::commands::load_traces;
use crate::error::CliError;
use crate::report::{fmt_f64, write_csv};

#[derive(Debug, Args)]
pub struct MinkArgs {
    #[arg(long)]
    pub traces: PathBuf,
    /// Percent of lowest-logprob tokens to average.
    #[arg(long, default_value_t = 20.0)]
    pub k: f64,
    #[arg(long, default_value = "mink.csv")]
    pub out: PathBuf,
}

pub fn run(args: &MinkArgs) -> Result<(), CliError> {
    let (_, traces) = load_traces(&args.traces)?;
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for trace in &traces {
        let logprobs: Vec<f64> = trace
            .steps
            .iter()
            .filter_map(|s| s.chosen_candidate().map(|c| c.logprob_raw))
            .collect();
        let degraded = trace.len() - logprobs.len();
        if logprobs.is_empty() {
            skipped += 1;
            continue;
        }
        let value = min_k_percent(&logprobs, args.k).map_err(CliError::config)?;
        rows.push(vec![
            trace.prompt_id.clone(),
            trace.sample_index.to_string(),
            logprobs.len().to_string(),
            degraded.to_string(),
            fmt_f64(value),
        ]);
    }
    if rows.is_empty() {
        return Err(CliError::Estimation(
            "no trace carries usable chosen-token logprobs".into(),
        ));
    }
    rows.sort();
    write_csv(
        &args.out,
        &[format!("k={}", args.k)],
        &["prompt_id", "sample_index", "n_tokens", "n_degraded", "min_k_avg_logprob"],
        &rows,
    )?;
    println!(
        "mink: {} traces scored (K={}%), {} skipped -> {}",
        rows.len(),
        args.k,
        skipped,
        args.out.display()
    );
    Ok(())
}
