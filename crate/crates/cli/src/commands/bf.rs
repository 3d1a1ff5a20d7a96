//! `bfkit bf`: per-instance and task-level branching factor from a trace file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use bfkit_core::bf::{
    bf_entropy_aggregated, bf_nll, bf_task, Aggregation, BfError, BfEstimate, Estimator,
};
use bfkit_core::stats::mean;
use bfkit_core::trace::{PromptCase, SequenceTrace};

use crate::commands::{case_index, group_by_prompt, load_cases, load_traces};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{fmt_f64, write_csv, write_json};

pub const LOW_COVERAGE_WARNING: f64 = 0.99;

#[derive(Debug, Args)]
pub struct BfArgs {
    /// Trace JSONL file.
    #[arg(long)]
    pub traces: PathBuf,
    /// Optional run config supplying estimator default and output directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// entropy | nll (default from config, else entropy)
    #[arg(long)]
    pub estimator: Option<String>,
    /// Prompt cases JSONL supplying factor labels (adds factor columns).
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Comma-separated factor names: emit one row per factor-level group
    /// instead of per-instance rows. Requires --cases.
    #[arg(long)]
    pub group_by: Option<String>,
    /// Sensitivity variant: aggregate as mean of per-trace exponentials.
    #[arg(long)]
    pub mean_of_exp: bool,
    /// Output CSV path.
    #[arg(long, default_value = "bf.csv")]
    pub out: PathBuf,
    /// Optional JSON dump of the full estimates.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Serialize)]
struct InstanceEstimate<'a> {
    prompt_id: &'a str,
    task: String,
    estimate: BfEstimate,
}

fn count_degraded(traces: &[SequenceTrace]) -> usize {
    traces.iter().flat_map(|t| &t.steps).filter(|s| s.is_degraded()).count()
}

pub fn run(args: &BfArgs) -> Result<(), CliError> {
    let config = RunConfig::load_optional(args.config.as_deref())?;
    let estimator = config.resolve_estimator(args.estimator.as_deref())?;
    let out_path = config.resolve_out(&args.out);
    let aggregation = if args.mean_of_exp {
        Aggregation::MeanOfExp
    } else {
        Aggregation::ExpOfMean
    };
    let (manifest, traces) = load_traces(&args.traces)?;
    let cases = args.cases.as_ref().map(|p| load_cases(p)).transpose()?;
    let case_map = cases.as_deref().map(case_index).unwrap_or_default();

    let groups = group_by_prompt(&traces);
    let mut instances: Vec<(PromptCase, BfEstimate)> = Vec::new();
    let mut estimation_failures: Vec<String> = Vec::new();
    for (prompt_id, group) in &groups {
        let owned: Vec<SequenceTrace> = group.iter().map(|t| (*t).clone()).collect();
        let result = match estimator {
            Estimator::Entropy => bf_entropy_aggregated(&owned, &manifest.decoding, aggregation),
            Estimator::Nll => bf_nll(&owned, &manifest.decoding),
        };
        match result {
            Ok(estimate) => {
                let case = case_map.get(prompt_id).map(|c| (*c).clone()).unwrap_or(
                    PromptCase {
                        prompt_id: prompt_id.to_string(),
                        prompt_text: String::new(),
                        complexity: 0,
                        factors: BTreeMap::new(),
                        gold_answer: None,
                        task: String::new(),
                    },
                );
                instances.push((case, estimate));
            }
            Err(e @ (BfError::AllTracesDegraded { .. } | BfError::DegradedStep { .. })) => {
                estimation_failures.push(e.to_string());
            }
            Err(e) => return Err(CliError::failure(e)),
        }
    }
    if instances.is_empty() {
        let degraded = count_degraded(&traces);
        return Err(CliError::Estimation(format!(
            "no instance could be estimated with the {estimator} estimator: {} failures, {degraded} degraded steps across {} traces",
            estimation_failures.len(),
            traces.len()
        )));
    }

    let factor_names: Vec<String> = {
        let mut names: BTreeSet<String> = BTreeSet::new();
        for (case, _) in &instances {
            names.extend(case.factors.keys().cloned());
        }
        names.into_iter().collect()
    };

    let mut header: Vec<&str> = vec!["prompt_id", "task"];
    for name in &factor_names {
        header.push(name.as_str());
    }
    header.extend_from_slice(&[
        "estimator",
        "bf",
        "n_sequences",
        "mean_len",
        "coverage",
    ]);

    let mut rows: Vec<Vec<String>> = Vec::new();
    match &args.group_by {
        None => {
            for (case, estimate) in &instances {
                rows.push(instance_row(case, estimate, &factor_names));
            }
            let task_bf = bf_task(&instances, None).map_err(CliError::failure)?;
            let total: usize = instances.iter().map(|(_, e)| e.n_sequences).sum();
            let mut row = vec!["ALL".to_string(), String::new()];
            row.extend(factor_names.iter().map(|_| String::new()));
            row.extend([
                estimator.to_string(),
                fmt_f64(task_bf),
                total.to_string(),
                fmt_f64(mean(
                    &instances.iter().map(|(_, e)| e.mean_seq_length).collect::<Vec<_>>(),
                )),
                fmt_f64(mean(
                    &instances.iter().map(|(_, e)| e.coverage_summary).collect::<Vec<_>>(),
                )),
            ]);
            rows.push(row);
        }
        Some(spec) => {
            if args.cases.is_none() {
                return Err(CliError::Config(
                    "--group-by requires --cases for factor labels".into(),
                ));
            }
            let group_factors: Vec<String> =
                spec.split(',').map(|s| s.trim().to_string()).collect();
            let mut grouped: BTreeMap<Vec<String>, Vec<&(PromptCase, BfEstimate)>> =
                BTreeMap::new();
            for pair in &instances {
                let key: Vec<String> = group_factors
                    .iter()
                    .map(|f| pair.0.factors.get(f).cloned().unwrap_or_default())
                    .collect();
                grouped.entry(key).or_default().push(pair);
            }
            for (key, members) in grouped {
                let bf = mean(&members.iter().map(|(_, e)| e.value).collect::<Vec<_>>());
                let mut row = vec![String::new(), String::new()];
                for name in &factor_names {
                    match group_factors.iter().position(|f| f == name) {
                        Some(i) => row.push(key[i].clone()),
                        None => row.push(String::new()),
                    }
                }
                row.extend([
                    estimator.to_string(),
                    fmt_f64(bf),
                    members
                        .iter()
                        .map(|(_, e)| e.n_sequences)
                        .sum::<usize>()
                        .to_string(),
                    fmt_f64(mean(
                        &members.iter().map(|(_, e)| e.mean_seq_length).collect::<Vec<_>>(),
                    )),
                    fmt_f64(mean(
                        &members.iter().map(|(_, e)| e.coverage_summary).collect::<Vec<_>>(),
                    )),
                ]);
                rows.push(row);
            }
        }
    }

    write_csv(&out_path, &[], &header, &rows)?;
    if let Some(json_path) = &args.json {
        let dump: Vec<InstanceEstimate> = instances
            .iter()
            .map(|(case, estimate)| InstanceEstimate {
                prompt_id: &case.prompt_id,
                task: case.task.clone(),
                estimate: estimate.clone(),
            })
            .collect();
        write_json(json_path, &dump)?;
    }

    let coverage = mean(
        &instances.iter().map(|(_, e)| e.coverage_summary).collect::<Vec<_>>(),
    );
    let task_bf = bf_task(&instances, None).map_err(CliError::failure)?;
    println!(
        "bf: {} instances, task BF = {:.4} ({}), mean coverage = {:.4}",
        instances.len(),
        task_bf,
        estimator,
        coverage
    );
    if coverage < LOW_COVERAGE_WARNING {
        println!(
            "warning: mean coverage {coverage:.4} < {LOW_COVERAGE_WARNING}; entropies are computed over renormalized top-k snapshots and may be biased"
        );
    }
    if !estimation_failures.is_empty() {
        println!(
            "warning: {} instances skipped: {}",
            estimation_failures.len(),
            estimation_failures.join("; ")
        );
    }
    Ok(())
}

fn instance_row(
    case: &PromptCase,
    estimate: &BfEstimate,
    factor_names: &[String],
) -> Vec<String> {
    let mut row = vec![case.prompt_id.clone(), case.task.clone()];
    for name in factor_names {
        row.push(case.factors.get(name).cloned().unwrap_or_default());
    }
    row.extend([
        estimate.estimator.to_string(),
        fmt_f64(estimate.value),
        estimate.n_sequences.to_string(),
        fmt_f64(estimate.mean_seq_length),
        fmt_f64(estimate.coverage_summary),
    ]);
    row
}
