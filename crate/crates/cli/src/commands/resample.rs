//! `bfkit resample`: fork continuations at chosen output positions and
//! optionally score the forks against gold answers.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use bfkit_client::{resample_from_position, ForkOutcome, ForkReport, ForkSettings};
use bfkit_core::analysis::AnswerExtractor;
use bfkit_core::trace::SequenceTrace;

use crate::commands::{case_index, load_cases, load_traces, parse_usize_list, trace_text};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{svg_sibling, write_json};
use crate::svg::bar_chart;

#[derive(Debug, Args)]
pub struct ResampleArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Original traces to fork from (first sample per prompt is used).
    #[arg(long)]
    pub traces: PathBuf,
    /// Prompt cases JSONL (prompt text, optional gold answers).
    #[arg(long)]
    pub prompts: PathBuf,
    /// Comma-separated fork positions.
    #[arg(long, default_value = "25,200")]
    pub positions: String,
    /// Continuations per (prompt, position); defaults to sampling.sample_count_m.
    #[arg(long)]
    pub samples: Option<u32>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Allow the first resampled token to equal the original.
    #[arg(long)]
    pub unconstrained: bool,
    /// Regex extracting an answer from continuation text (capture group 1);
    /// enables accuracy scoring against gold answers.
    #[arg(long)]
    pub extract: Option<String>,
    #[arg(long, default_value = "resample.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Serialize)]
struct PositionGroup {
    fork_position: u32,
    prompts: usize,
    forked: usize,
    forced_fork_failed: usize,
    failed: usize,
    /// Fraction of forked continuations whose extracted answer matched gold;
    /// present only when scoring was possible.
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    reports: Vec<ForkReport>,
}

pub fn run(args: &ResampleArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let endpoint = config.required_endpoint()?.to_endpoint("BFKIT_API_KEY")?;
    let params = config.decoding.to_params()?;
    let positions = parse_usize_list(&args.positions, "position")?;
    let samples = args.samples.unwrap_or(config.sampling.sample_count_m);
    let settings = ForkSettings {
        constrained: !args.unconstrained,
        max_fork_attempts: 5,
        max_tokens: args.max_tokens.unwrap_or(config.sampling.max_tokens),
    };
    let extractor = args
        .extract
        .as_deref()
        .map(AnswerExtractor::from_pattern)
        .transpose()
        .map_err(CliError::config)?;

    let out_path = config.resolve_out(&args.out);
    let (_, traces) = load_traces(&args.traces)?;
    let prompts = load_cases(&args.prompts)?;
    let index = case_index(&prompts);

    // One original per prompt: the lowest sample_index.
    let mut originals: Vec<&SequenceTrace> = Vec::new();
    for (_, group) in crate::commands::group_by_prompt(&traces) {
        let first = group
            .into_iter()
            .min_by_key(|t| t.sample_index)
            .expect("nonempty group");
        originals.push(first);
    }

    let mut groups: Vec<PositionGroup> = Vec::new();
    for &position in &positions {
        let mut reports = Vec::new();
        let mut forked = 0usize;
        let mut forced = 0usize;
        let mut failed = 0usize;
        let mut scored = 0usize;
        let mut correct = 0usize;
        for original in &originals {
            let case = index.get(original.prompt_id.as_str()).ok_or_else(|| {
                CliError::Config(format!(
                    "trace prompt {} missing from the prompts file",
                    original.prompt_id
                ))
            })?;
            if position >= original.steps.len() {
                continue; // this original is too short for the fork point
            }
            let report = resample_from_position(
                &endpoint,
                case,
                original,
                position as u32,
                &params,
                samples,
                &settings,
            )?;
            for sample in &report.samples {
                match &sample.outcome {
                    ForkOutcome::Forked { trace } => {
                        forked += 1;
                        if let (Some(extractor), Some(gold)) =
                            (extractor.as_ref(), case.gold_answer.as_ref())
                        {
                            scored += 1;
                            if extractor.extract(&trace_text(trace)).as_deref()
                                == Some(gold.as_str())
                            {
                                correct += 1;
                            }
                        }
                    }
                    ForkOutcome::ForcedForkFailed { .. } => forced += 1,
                    ForkOutcome::Failed { .. } => failed += 1,
                }
            }
            reports.push(report);
        }
        groups.push(PositionGroup {
            fork_position: position as u32,
            prompts: reports.len(),
            forked,
            forced_fork_failed: forced,
            failed,
            accuracy: if scored > 0 {
                Some(correct as f64 / scored as f64)
            } else {
                None
            },
            reports,
        });
    }
    write_json(&out_path, &groups)?;

    if !args.no_plot {
        let bars: Vec<(String, f64)> = groups
            .iter()
            .map(|g| {
                let value = g.accuracy.unwrap_or_else(|| {
                    let total = g.forked + g.forced_fork_failed + g.failed;
                    if total == 0 {
                        0.0
                    } else {
                        g.forked as f64 / total as f64
                    }
                });
                (format!("pos {}", g.fork_position), value)
            })
            .collect();
        let title = if groups.iter().any(|g| g.accuracy.is_some()) {
            "Accuracy of forked continuations"
        } else {
            "Successful fork rate"
        };
        let svg_path = args.svg.clone().unwrap_or_else(|| svg_sibling(&out_path));
        std::fs::write(&svg_path, bar_chart(title, "fork position", "rate", &bars))?;
    }
    for group in &groups {
        println!(
            "resample: position {} over {} prompts: {} forked, {} forced-fork-failed, {} failed{}",
            group.fork_position,
            group.prompts,
            group.forked,
            group.forced_fork_failed,
            group.failed,
            match group.accuracy {
                Some(acc) => format!(", accuracy {acc:.4}"),
                None => String::new(),
            }
        );
    }
    Ok(())
}
