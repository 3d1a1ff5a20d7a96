//! `bfkit correlate`: signed R² and Spearman correlation between two metric
//! columns, grouped by task and model when those columns exist.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use bfkit_core::analysis::{signed_r2, spearman};

use crate::error::CliError;
use crate::report::{fmt_f64, read_csv, svg_sibling, write_csv};
use crate::svg::heatmap;

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// CSV with the two metric columns, optionally task/model columns.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub x_col: String,
    #[arg(long)]
    pub y_col: String,
    #[arg(long, default_value = "correlation.csv")]
    pub out: PathBuf,
    /// Heatmap of signed R² (rows = models, cols = tasks).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub no_plot: bool,
}

pub fn run(args: &CorrelateArgs) -> Result<(), CliError> {
    let (header, records) = read_csv(&args.input)?;
    let col = |name: &str| -> Result<usize, CliError> {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Config(format!("input has no {name:?} column")))
    };
    let x_idx = col(&args.x_col)?;
    let y_idx = col(&args.y_col)?;
    let task_idx = header.iter().position(|c| c == "task");
    let model_idx = header.iter().position(|c| c == "model");

    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for record in &records {
        let parse = |i: usize| -> Result<f64, CliError> {
            record[i]
                .parse()
                .map_err(|_| CliError::Config(format!("bad numeric value {:?}", record[i])))
        };
        let key = (
            task_idx.map(|i| record[i].clone()).unwrap_or_else(|| "all".into()),
            model_idx.map(|i| record[i].clone()).unwrap_or_else(|| "all".into()),
        );
        let entry = groups.entry(key).or_default();
        entry.0.push(parse(x_idx)?);
        entry.1.push(parse(y_idx)?);
    }

    let metric_pair = format!("{}:{}", args.x_col, args.y_col);
    let mut rows = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut degenerate = Vec::new();
    for ((task, model), (xs, ys)) in &groups {
        match (signed_r2(xs, ys), spearman(xs, ys)) {
            (Ok(r2), Ok(rho)) => {
                cells.insert((model.clone(), task.clone()), r2);
                rows.push(vec![
                    task.clone(),
                    model.clone(),
                    metric_pair.clone(),
                    fmt_f64(r2),
                    fmt_f64(rho),
                ]);
            }
            (Err(e), _) | (_, Err(e)) => {
                degenerate.push(format!("{task}/{model}: {e}"));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Estimation(format!(
            "no group had enough non-degenerate data: {}",
            degenerate.join("; ")
        )));
    }
    write_csv(
        &args.out,
        &[],
        &["task", "model", "metric_pair", "signed_r2", "spearman"],
        &rows,
    )?;

    if !args.no_plot {
        let mut models: Vec<String> = cells.keys().map(|(m, _)| m.clone()).collect();
        let mut tasks: Vec<String> = cells.keys().map(|(_, t)| t.clone()).collect();
        models.sort();
        models.dedup();
        tasks.sort();
        tasks.dedup();
        let grid: Vec<Vec<Option<f64>>> = models
            .iter()
            .map(|m| {
                tasks
                    .iter()
                    .map(|t| cells.get(&(m.clone(), t.clone())).copied())
                    .collect()
            })
            .collect();
        let svg_path = args.svg.clone().unwrap_or_else(|| svg_sibling(&args.out));
        std::fs::write(
            &svg_path,
            heatmap(
                &format!("Signed R² ({metric_pair})"),
                &models,
                &tasks,
                &grid,
            ),
        )?;
    }
    println!(
        "correlate: {} groups ({} degenerate skipped) -> {}",
        rows.len(),
        degenerate.len(),
        args.out.display()
    );
    for warning in &degenerate {
        println!("warning: skipped {warning}");
    }
    Ok(())
}
