//! Subcommand implementations and shared input loading.

pub mod aep;
pub mod bf;
pub mod correlate;
pub mod diversity;
pub mod majority;
pub mod mink;
pub mod nudge;
pub mod pareto;
pub mod resample;
pub mod sample;
pub mod trajectory;

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

use bfkit_core::trace::{read_traces, PromptCase, RunManifest, SequenceTrace};

use crate::error::CliError;

pub(crate) fn load_traces(path: &Path) -> Result<(RunManifest, Vec<SequenceTrace>), CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    read_traces(BufReader::new(file))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Prompts/cases files are JSONL: one PromptCase object per line.
pub(crate) fn load_cases(path: &Path) -> Result<Vec<PromptCase>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cases = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: PromptCase = serde_json::from_str(line).map_err(|e| {
            CliError::Config(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        cases.push(case);
    }
    if cases.is_empty() {
        return Err(CliError::Config(format!(
            "{} contains no prompt cases",
            path.display()
        )));
    }
    Ok(cases)
}

pub(crate) fn case_index(cases: &[PromptCase]) -> BTreeMap<&str, &PromptCase> {
    cases.iter().map(|c| (c.prompt_id.as_str(), c)).collect()
}

/// Groups traces by prompt_id, preserving deterministic key order.
pub(crate) fn group_by_prompt(
    traces: &[SequenceTrace],
) -> BTreeMap<&str, Vec<&SequenceTrace>> {
    let mut groups: BTreeMap<&str, Vec<&SequenceTrace>> = BTreeMap::new();
    for trace in traces {
        groups.entry(trace.prompt_id.as_str()).or_default().push(trace);
    }
    groups
}

pub(crate) fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("invalid {what} entry {part:?}")))
        })
        .collect()
}

/// Concatenated text of the chosen tokens of a trace.
pub(crate) fn trace_text(trace: &SequenceTrace) -> String {
    trace
        .steps
        .iter()
        .filter_map(|s| s.chosen_candidate().map(|c| c.token_text.as_str()))
        .collect()
}
