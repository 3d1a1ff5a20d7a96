//! `bfkit sample`: sample M completions per prompt from a configured
//! endpoint and write the trace JSONL.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use bfkit_client::{sample_completions, SampleFailure};
use bfkit_core::stats::mean;
use bfkit_core::trace::{write_traces, RunManifest, SequenceTrace};

use crate::commands::load_cases;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::write_json;

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Prompt cases JSONL.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value = "traces.jsonl")]
    pub out: PathBuf,
    /// Manifest timestamp override (RFC 3339) for byte-reproducible runs;
    /// defaults to the current time.
    #[arg(long)]
    pub created_at: Option<String>,
}

#[derive(Serialize)]
struct ErrorManifest<'a> {
    kind: &'a str,
    errors: Vec<FailureRecord<'a>>,
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    prompt_id: &'a str,
    #[serde(flatten)]
    failure: &'a SampleFailure,
}

pub fn run(args: &SampleArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let endpoint = config.required_endpoint()?.to_endpoint("BFKIT_API_KEY")?;
    let params = config.decoding.to_params()?;
    let seed_policy = config.sampling.seed_policy(params.seed)?;
    let prompts = load_cases(&args.prompts)?;
    let out_path = config.resolve_out(&args.out);

    // Prompt factor levels must come from the declared domains.
    for case in &prompts {
        for (factor, level) in &case.factors {
            match config.factors.get(factor) {
                Some(levels) if levels.contains(level) => {}
                Some(_) => {
                    return Err(CliError::Config(format!(
                        "prompt {}: level {level:?} outside domain of factor {factor}",
                        case.prompt_id
                    )))
                }
                None => {
                    return Err(CliError::Config(format!(
                        "prompt {}: factor {factor} not declared in [factors]",
                        case.prompt_id
                    )))
                }
            }
        }
    }

    let mut traces: Vec<SequenceTrace> = Vec::new();
    let mut failures: Vec<(String, SampleFailure)> = Vec::new();
    for case in &prompts {
        let run = sample_completions(
            &endpoint,
            case,
            &params,
            config.sampling.sample_count_m,
            seed_policy,
            config.sampling.max_tokens,
        )?;
        traces.extend(run.traces);
        failures.extend(
            run.failures
                .into_iter()
                .map(|f| (case.prompt_id.clone(), f)),
        );
    }

    if traces.is_empty() && !failures.is_empty() {
        if failures.iter().all(|(_, f)| f.transport) {
            return Err(CliError::Capability(format!(
                "endpoint unreachable: all {} samples failed in transport after retries",
                failures.len()
            )));
        }
        return Err(CliError::Failure(format!(
            "all {} samples failed",
            failures.len()
        )));
    }

    let manifest = RunManifest {
        model_name: endpoint.model_name.clone(),
        endpoint: Some(endpoint.base_url.clone()),
        sample_count_m: config.sampling.sample_count_m,
        decoding: params,
        factor_domains: config.factors.clone(),
        created_at: args
            .created_at
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339()),
        extra: Default::default(),
    };
    let mut buf = Vec::new();
    write_traces(&traces, &manifest, &mut buf).map_err(CliError::failure)?;
    std::fs::write(&out_path, buf)?;

    let lengths: Vec<f64> = traces.iter().map(|t| t.len() as f64).collect();
    let coverages: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.steps.iter().map(|s| s.coverage_mass))
        .collect();
    println!(
        "sample: {} traces over {} prompts, mean length {:.1}, mean coverage {:.4} -> {}",
        traces.len(),
        prompts.len(),
        mean(&lengths),
        mean(&coverages),
        out_path.display()
    );

    if !failures.is_empty() {
        let error_path = out_path.with_extension("errors.json");
        let manifest = ErrorManifest {
            kind: "error_manifest",
            errors: failures
                .iter()
                .map(|(prompt_id, failure)| FailureRecord {
                    prompt_id,
                    failure,
                })
                .collect(),
        };
        write_json(&error_path, &manifest)?;
        return Err(CliError::Partial(format!(
            "{} samples failed; error manifest at {}",
            failures.len(),
            error_path.display()
        )));
    }
    Ok(())
}
