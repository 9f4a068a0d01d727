//! Minimal CSV reading and writing for the numeric artifacts the CLI
//! exchanges: data matrices in, traces and tail curves out.

use ataflow_core::{Error, Result};
use std::path::Path;

/// Loads a UTF-8 CSV of numbers as a row-major matrix. A header row is
/// auto-detected (first row with any non-numeric cell) and skipped. Ragged
/// rows and non-numeric cells are rejected with their location.
pub fn load_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_csv(&text, path)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, usize> = cells
            .iter()
            .enumerate()
            .map(|(j, c)| c.parse::<f64>().map_err(|_| j))
            .collect();
        match parsed {
            Ok(row) => {
                if let Some(w) = width {
                    if row.len() != w {
                        return Err(Error::Usage(format!(
                            "{}: ragged row {} has {} cells, expected {w}",
                            path.display(),
                            lineno + 1,
                            row.len()
                        )));
                    }
                } else {
                    width = Some(row.len());
                }
                rows.push(row);
            }
            Err(col) => {
                // a non-numeric first row is a header; elsewhere it is an error
                if rows.is_empty() && width.is_none() {
                    continue;
                }
                return Err(Error::Usage(format!(
                    "{}: non-numeric cell at row {}, column {}: {:?}",
                    path.display(),
                    lineno + 1,
                    col + 1,
                    cells[col]
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Usage(format!(
            "{}: no numeric rows found",
            path.display()
        )));
    }
    Ok(rows)
}

/// Writes a CSV with a header row; each record is formatted by the caller.
pub fn write_csv(path: &Path, header: &str, records: &[String]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 24 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for r in records {
        out.push_str(r);
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| Error::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Formats an f64 for CSV output; infinities become "inf"/"-inf".
pub fn fmt_cell(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}
