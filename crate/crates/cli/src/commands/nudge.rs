//! `bfkit nudge`: dual-model nudging runs with a nudging-ratio histogram.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use bfkit_client::{nudging_generate, NudgeReport, NudgeSettings};
use bfkit_core::stats::mean;

use crate::commands::load_cases;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{svg_sibling, write_json};
use crate::svg::bar_chart;

#[derive(Debug, Args)]
pub struct NudgeArgs {
    /// Config with both [endpoint] (base model) and [aligned_endpoint].
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub prompts: PathBuf,
    /// Top-1 probability threshold; overrides [nudging].gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Overrides [nudging].max_tokens.
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long, default_value = "nudge.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Serialize)]
struct PromptNudgeReport<'a> {
    prompt_id: &'a str,
    #[serde(flatten)]
    report: &'a NudgeReport,
}

pub fn run(args: &NudgeArgs) -> Result<(), CliError> {
    let config = RunConfig::load(&args.config)?;
    let base = config.required_endpoint()?.to_endpoint("BFKIT_API_KEY")?;
    let aligned = config
        .aligned_endpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [aligned_endpoint] section".into()))?
        .to_endpoint("BFKIT_ALIGNED_API_KEY")?;
    let params = config.decoding.to_params()?;
    let settings = NudgeSettings {
        gamma: args.gamma.unwrap_or(config.nudging.gamma),
        max_tokens: args.max_tokens.unwrap_or(config.nudging.max_tokens),
        max_injected_per_event: config.nudging.max_injected_per_event,
    };
    if !(settings.gamma > 0.0 && settings.gamma < 1.0) {
        return Err(CliError::Config(format!(
            "gamma must be in (0, 1), got {}",
            settings.gamma
        )));
    }
    let prompts = load_cases(&args.prompts)?;
    let out_path = config.resolve_out(&args.out);

    let mut reports: Vec<(String, NudgeReport)> = Vec::new();
    for case in &prompts {
        let report = nudging_generate(&base, &aligned, case, &params, &settings)?;
        reports.push((case.prompt_id.clone(), report));
    }
    let dump: Vec<PromptNudgeReport> = reports
        .iter()
        .map(|(prompt_id, report)| PromptNudgeReport { prompt_id, report })
        .collect();
    write_json(&out_path, &dump)?;

    let ratios: Vec<f64> = reports.iter().map(|(_, r)| r.nudging_ratio).collect();
    if !args.no_plot {
        // Ten-bin histogram of per-prompt nudging ratios.
        let mut bins = [0usize; 10];
        for ratio in &ratios {
            let bin = ((ratio * 10.0).floor() as usize).min(9);
            bins[bin] += 1;
        }
        let bars: Vec<(String, f64)> = bins
            .iter()
            .enumerate()
            .map(|(i, count)| {
                (
                    format!("{:.1}-{:.1}", i as f64 / 10.0, (i + 1) as f64 / 10.0),
                    *count as f64,
                )
            })
            .collect();
        let svg_path = args.svg.clone().unwrap_or_else(|| svg_sibling(&out_path));
        std::fs::write(
            &svg_path,
            bar_chart("Nudging ratio histogram", "nudging ratio", "prompts", &bars),
        )?;
    }
    println!(
        "nudge: {} prompts, mean nudging ratio {:.4}, total events {} -> {}",
        reports.len(),
        mean(&ratios),
        reports.iter().map(|(_, r)| r.events.len()).sum::<usize>(),
        out_path.display()
    );
    Ok(())
}
