//! Deterministic CSV/JSON report writing. CSV files may start with `#`
//! comment lines echoing the run parameters; floats use Rust's shortest
//! round-trip formatting so identical inputs yield identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

pub fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

/// Writes `# comment` lines, a header row, then the records.
pub fn write_csv(
    path: &Path,
    comments: &[String],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for comment in comments {
        buf.extend_from_slice(format!("# {comment}\n").as_bytes());
    }
    {
        let mut writer = csv::WriterBuilder::new().from_writer(&mut buf);
        writer.write_record(header).map_err(CliError::failure)?;
        for row in rows {
            writer.write_record(row).map_err(CliError::failure)?;
        }
        writer.flush()?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::failure)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a CSV file (skipping `#` comment lines) into header + string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let body: String = text
        .lines()
        .filter(|line| !line.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    Ok((header, rows))
}

/// Derives the default sibling SVG path for a report file.
pub fn svg_sibling(out: &Path) -> std::path::PathBuf {
    out.with_extension("svg")
}
