//! `bfkit diversity`: Distinct-N lexical diversity over completion texts.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use bfkit_core::analysis::distinct_n;

use crate::error::CliError;
use crate::report::write_json;

#[derive(Debug, Args)]
pub struct DiversityArgs {
    /// Text file: one completion per line, whitespace-tokenized.
    #[arg(long)]
    pub texts: PathBuf,
    /// n-gram order.
    #[arg(short, long, default_value_t = 1)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DiversityReport {
    n: usize,
    texts: usize,
    distinct_n: f64,
}

pub fn run(args: &DiversityArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.texts)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.texts.display())))?;
    let tokenized: Vec<Vec<String>> = text
        .lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| line.split_whitespace().map(str::to_string).collect())
        .collect();
    if tokenized.is_empty() {
        return Err(CliError::Config(format!(
            "{} contains no completions",
            args.texts.display()
        )));
    }
    let value = distinct_n(&tokenized, args.n).map_err(CliError::config)?;
    println!("distinct-{} = {value}", args.n);
    if let Some(out) = &args.out {
        write_json(
            out,
            &DiversityReport {
                n: args.n,
                texts: tokenized.len(),
                distinct_n: value,
            },
        )?;
    }
    Ok(())
}
