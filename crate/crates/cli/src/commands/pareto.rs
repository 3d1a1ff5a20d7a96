//! `bfkit pareto`: per-factor impact attribution from a BF table CSV.

use std::path::PathBuf;

use clap::Args;

use bfkit_core::analysis::{pareto_impacts, pareto_impacts_matched, FactorRow, FactorTable};

use crate::error::CliError;
use crate::report::{fmt_f64, read_csv, write_csv};

/// Columns of `bfkit bf` reports that are never factors.
const NON_FACTOR_COLUMNS: [&str; 7] = [
    "prompt_id",
    "task",
    "estimator",
    "bf",
    "n_sequences",
    "mean_len",
    "coverage",
];

#[derive(Debug, Args)]
pub struct ParetoArgs {
    /// CSV with factor columns and a BF column (e.g. a `bfkit bf` report).
    #[arg(long)]
    pub table: PathBuf,
    /// Comma-separated factor column names. Defaults to every column that is
    /// neither the BF column nor a standard bf-report column.
    #[arg(long)]
    pub factors: Option<String>,
    #[arg(long, default_value = "bf")]
    pub bf_col: String,
    /// Matched-pairs variant: compare levels only within matched settings of
    /// the other factors instead of marginalizing.
    #[arg(long)]
    pub matched: bool,
    #[arg(long, default_value = "pareto.csv")]
    pub out: PathBuf,
}

pub fn run(args: &ParetoArgs) -> Result<(), CliError> {
    let (header, records) = read_csv(&args.table)?;
    let bf_idx = header
        .iter()
        .position(|c| c == &args.bf_col)
        .ok_or_else(|| {
            CliError::Config(format!("table has no {:?} column", args.bf_col))
        })?;
    let factor_names: Vec<String> = match &args.factors {
        Some(spec) => spec.split(',').map(|s| s.trim().to_string()).collect(),
        None => header
            .iter()
            .filter(|c| c.as_str() != args.bf_col && !NON_FACTOR_COLUMNS.contains(&c.as_str()))
            .cloned()
            .collect(),
    };
    if factor_names.is_empty() {
        return Err(CliError::Config("no factor columns identified".into()));
    }
    let factor_idx: Vec<(String, usize)> = factor_names
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|c| c == name)
                .map(|i| (name.clone(), i))
                .ok_or_else(|| CliError::Config(format!("table has no {name:?} column")))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for record in &records {
        // Rows missing any factor level (e.g. the ALL summary row of a bf
        // report) are not factor measurements.
        if factor_idx.iter().any(|(_, i)| record[*i].is_empty()) {
            continue;
        }
        let bf: f64 = record[bf_idx]
            .parse()
            .map_err(|_| CliError::Config(format!("bad BF value {:?}", record[bf_idx])))?;
        rows.push(FactorRow {
            levels: factor_idx
                .iter()
                .map(|(name, i)| (name.clone(), record[*i].clone()))
                .collect(),
            bf,
        });
    }
    let table = FactorTable::from_rows(rows).map_err(CliError::config)?;
    let report = if args.matched {
        pareto_impacts_matched(&table)
    } else {
        pareto_impacts(&table)
    }
    .map_err(CliError::config)?;

    // Pareto order: descending raw impact, ties by name.
    let mut ordered: Vec<(&String, &f64)> = report.raw_impacts.iter().collect();
    ordered.sort_by(|a, b| {
        b.1.partial_cmp(a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(b.0))
    });
    let out_rows: Vec<Vec<String>> = ordered
        .iter()
        .map(|(factor, raw)| {
            vec![
                (*factor).clone(),
                fmt_f64(**raw),
                fmt_f64(report.normalized[*factor]),
            ]
        })
        .collect();
    write_csv(
        &args.out,
        &[],
        &["factor", "impact_raw", "impact_normalized"],
        &out_rows,
    )?;
    if let Some((factor, raw)) = ordered.first() {
        println!(
            "pareto: dominant factor {factor} (raw impact {}, normalized {})",
            fmt_f64(**raw),
            fmt_f64(report.normalized[*factor])
        );
    }
    Ok(())
}
