//! CSV matrices, vectors and traces.
//!
//! Input files have no header; blank lines and lines starting with `#` are
//! skipped. Output numbers use 17 significant digits.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use dykstra::diagnostics::RateReport;
use dykstra::CycleTrace;

use crate::error::{Result, ToolError};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| ToolError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for record in reader(path)?.records() {
        let record = record.map_err(|source| ToolError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>().map_err(|_| {
                    ToolError::invalid(
                        path,
                        format!("line {line}, column {}", col + 1),
                        format!("`{cell}` is not a number"),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if !row.is_empty() && !(row.len() == 1 && record.get(0) == Some("")) {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Reads a dense matrix, one row per line.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = read_rows(path)?;
    let Some(first) = rows.first() else {
        return Err(ToolError::invalid(path, "line 1", "matrix is empty"));
    };
    let width = first.len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(ToolError::invalid(
            path,
            format!("row {}", i + 1),
            format!("{} entries, expected {width}", rows[i].len()),
        ));
    }
    Ok(rows)
}

/// Reads a vector written either as one row or as one column.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let rows = read_rows(path)?;
    if rows.len() > 1 && rows.iter().any(|r| r.len() != 1) {
        return Err(ToolError::invalid(
            path,
            "line 1",
            "vector must be a single row or a single column",
        ));
    }
    Ok(rows.into_iter().flatten().collect())
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Writes one row per inner step: `cycle,j,s_j,v,err,step_proj,step_shqp`.
///
/// `v` is the dual value after step `j`. The traces must have been
/// recorded with step detail.
pub fn write_trace<W: Write>(out: W, traces: &[CycleTrace]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cycle", "j", "s_j", "v", "err", "step_proj", "step_shqp"])?;
    for t in traces {
        for s in &t.steps {
            w.write_record([
                t.cycle.to_string(),
                s.j.to_string(),
                s.s.to_string(),
                fmt_num(s.v_plus),
                fmt_opt(s.err),
                fmt_num(s.step_proj),
                fmt_num(s.step_shqp),
            ])?;
        }
    }
    w.flush()
}

pub fn write_trace_file(path: &Path, traces: &[CycleTrace]) -> Result<()> {
    let file = File::create(path).map_err(|e| ToolError::io(path, e))?;
    write_trace(io::BufWriter::new(file), traces).map_err(|e| ToolError::io(path, e))
}

/// Writes `cycle,err,decrease`, one row per cycle.
pub fn write_rate_csv<W: Write>(out: W, report: &RateReport) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cycle", "err", "decrease"])?;
    for (k, (e, d)) in report.errors.iter().zip(&report.decreases).enumerate() {
        w.write_record([(k + 1).to_string(), fmt_num(*e), fmt_num(*d)])?;
    }
    w.flush()
}
