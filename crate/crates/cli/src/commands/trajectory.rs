//! `bfkit trajectory`: windowed BF over output positions, raw and
//! EMA-smoothed, as CSV plus an optional SVG line chart.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use bfkit_core::bf::{bf_trajectory, BfError, DEFAULT_EMA_ALPHA, DEFAULT_WINDOW_LEN};
use bfkit_core::trace::SequenceTrace;

use crate::commands::{case_index, group_by_prompt, load_cases, load_traces};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{fmt_f64, svg_sibling, write_csv};
use crate::svg::{line_chart, Series};

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub traces: PathBuf,
    /// Optional run config supplying estimator default and output directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Window width in output tokens.
    #[arg(long, default_value_t = DEFAULT_WINDOW_LEN)]
    pub window: u32,
    /// EMA smoothing factor.
    #[arg(long, default_value_t = DEFAULT_EMA_ALPHA)]
    pub alpha: f64,
    /// entropy | nll (default from config, else entropy)
    #[arg(long)]
    pub estimator: Option<String>,
    /// Comma-separated factor names to split series by (requires --cases).
    #[arg(long)]
    pub group_by: Option<String>,
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long, default_value = "trajectory.csv")]
    pub out: PathBuf,
    /// SVG chart path (defaults to the CSV path with .svg).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Emit CSV only.
    #[arg(long)]
    pub no_plot: bool,
}

pub fn run(args: &TrajectoryArgs) -> Result<(), CliError> {
    let run_config = RunConfig::load_optional(args.config.as_deref())?;
    let estimator = run_config.resolve_estimator(args.estimator.as_deref())?;
    let out_path = run_config.resolve_out(&args.out);
    if args.window < 1 {
        return Err(CliError::Config("window must be >= 1".into()));
    }
    if !(args.alpha > 0.0 && args.alpha <= 1.0) {
        return Err(CliError::Config(format!(
            "alpha must be in (0, 1], got {}",
            args.alpha
        )));
    }
    let (manifest, traces) = load_traces(&args.traces)?;

    // Series groups: one per factor-level combination, or a single "all".
    let mut groups: BTreeMap<String, Vec<SequenceTrace>> = BTreeMap::new();
    match (&args.group_by, &args.cases) {
        (Some(spec), Some(cases_path)) => {
            let cases = load_cases(cases_path)?;
            let index = case_index(&cases);
            let factors: Vec<&str> = spec.split(',').map(str::trim).collect();
            for (prompt_id, members) in group_by_prompt(&traces) {
                let label = match index.get(prompt_id) {
                    Some(case) => factors
                        .iter()
                        .map(|f| {
                            format!("{f}={}", case.factors.get(*f).cloned().unwrap_or_default())
                        })
                        .collect::<Vec<_>>()
                        .join(","),
                    None => "unlabeled".to_string(),
                };
                groups
                    .entry(label)
                    .or_default()
                    .extend(members.into_iter().cloned());
            }
        }
        (Some(_), None) => {
            return Err(CliError::Config(
                "--group-by requires --cases for factor labels".into(),
            ))
        }
        (None, _) => {
            groups.insert("all".to_string(), traces.clone());
        }
    }

    let comments = vec![format!(
        "window={} alpha={} estimator={}",
        args.window, args.alpha, estimator
    )];
    let header = ["group", "window_start", "bf_raw", "bf_ema", "n_steps"];
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (label, members) in &groups {
        let points = match bf_trajectory(members, &manifest.decoding, args.window, estimator, args.alpha)
        {
            Ok(points) => points,
            Err(BfError::AllTracesDegraded { .. }) | Err(BfError::EmptyInput) => {
                return Err(CliError::Estimation(format!(
                    "group {label} has no usable steps"
                )))
            }
            Err(e) => return Err(CliError::failure(e)),
        };
        for point in &points {
            rows.push(vec![
                label.clone(),
                point.window_start.to_string(),
                fmt_f64(point.bf_raw),
                fmt_f64(point.bf_ema),
                point.n_steps.to_string(),
            ]);
        }
        series.push(Series {
            label: format!("{label} raw"),
            points: points
                .iter()
                .map(|p| (p.window_start as f64, p.bf_raw))
                .collect(),
        });
        series.push(Series {
            label: format!("{label} ema"),
            points: points
                .iter()
                .map(|p| (p.window_start as f64, p.bf_ema))
                .collect(),
        });
    }
    write_csv(&out_path, &comments, &header, &rows)?;
    if !args.no_plot {
        let svg_path = args.svg.clone().unwrap_or_else(|| svg_sibling(&out_path));
        let svg = line_chart("BF trajectory", "output position", "BF", &series);
        std::fs::write(&svg_path, svg)?;
        println!(
            "trajectory: {} windows across {} groups -> {} + {}",
            rows.len(),
            groups.len(),
            out_path.display(),
            svg_path.display()
        );
    } else {
        println!(
            "trajectory: {} windows across {} groups -> {}",
            rows.len(),
            groups.len(),
            out_path.display()
        );
    }
    Ok(())
}
