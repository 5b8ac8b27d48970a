//! Report rendering: the Table-1-shaped method comparison plus plot-ready
//! FROC curve dumps.

use std::path::Path;

use crate::dataset::write_text;
use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, FrocCurve, FrocPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

fn column_labels(report: &EvalReport) -> Vec<String> {
    let mut cols = vec!["mAP".to_string()];
    cols.extend(report.sensitivity_at.iter().map(|(t, _)| format!("S@{t}")));
    cols
}

fn row_values(report: &EvalReport) -> Vec<f64> {
    let mut vals = vec![report.map];
    vals.extend(report.sensitivity_at.iter().map(|(_, s)| *s));
    vals
}

/// Render reports as an aligned text table (one decimal place, best value
/// per column marked `*`), or as lossless full-precision CSV/JSON.
pub fn render_report(reports: &[EvalReport], format: ReportFormat) -> Result<String> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Contract("render_report needs at least one report".into()))?;
    if reports
        .iter()
        .any(|r| r.sensitivity_at.len() != first.sensitivity_at.len())
    {
        return Err(Error::Contract(
            "reports disagree on the FP target list".into(),
        ));
    }
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut out = String::from("method");
            for label in column_labels(first) {
                out.push(',');
                out.push_str(&label);
            }
            out.push('\n');
            for r in reports {
                out.push_str(&r.method_name);
                for v in row_values(r) {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
            Ok(out)
        }
        ReportFormat::Table => Ok(render_table(reports)),
    }
}

fn render_table(reports: &[EvalReport]) -> String {
    let labels = column_labels(&reports[0]);
    let n_cols = labels.len();

    // best per column at display precision, Table-1 bold convention
    let rounded: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| {
            row_values(r)
                .iter()
                .map(|v| (v * 10.0).round() / 10.0)
                .collect()
        })
        .collect();
    let best: Vec<f64> = (0..n_cols)
        .map(|c| rounded.iter().map(|row| row[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect();

    let cells: Vec<Vec<String>> = reports
        .iter()
        .zip(&rounded)
        .map(|(r, row)| {
            let mut cells = vec![r.method_name.clone()];
            for (c, v) in row.iter().enumerate() {
                let mark = if *v == best[c] { "*" } else { "" };
                cells.push(format!("{v:.1}{mark}"));
            }
            cells
        })
        .collect();

    let mut header = vec!["Method".to_string()];
    header.extend(labels);
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            cells
                .iter()
                .map(|row| row[c].len())
                .chain(std::iter::once(header[c].len()))
                .max()
                .unwrap()
        })
        .collect();

    let fmt_row = |row: &[String]| -> String {
        row.iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:>width$}", width = widths[c]))
            .collect::<Vec<_>>()
            .join(" | ")
    };

    let mut out = fmt_row(&header);
    out.push('\n');
    out.push_str(&"-".repeat(out.len() - 1));
    out.push('\n');
    for row in &cells {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    out
}

/// Serialize a FROC curve as a two-column CSV, full precision, ascending FP.
pub fn froc_to_csv(curve: &FrocCurve) -> Result<String> {
    if curve.points.is_empty() {
        return Err(Error::Contract("cannot dump an empty FROC curve".into()));
    }
    let mut out = String::from("mean_fp_per_volume,sensitivity\n");
    for p in &curve.points {
        out.push_str(&format!("{},{}\n", p.mean_fp_per_volume, p.sensitivity));
    }
    Ok(out)
}

pub fn froc_dump(curve: &FrocCurve, path: &Path) -> Result<()> {
    write_text(path, &froc_to_csv(curve)?)
}

/// Re-parse a FROC CSV dump; inverse of [`froc_to_csv`].
pub fn froc_from_csv(text: &str) -> Result<FrocCurve> {
    let mut lines = text.lines();
    match lines.next() {
        Some("mean_fp_per_volume,sensitivity") => {}
        _ => return Err(Error::Contract("missing FROC CSV header".into())),
    }
    let points = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (fp, sens) = l
                .split_once(',')
                .ok_or_else(|| Error::Contract(format!("bad FROC CSV row: {l}")))?;
            Ok(FrocPoint {
                mean_fp_per_volume: fp
                    .parse()
                    .map_err(|_| Error::Contract(format!("bad FP value: {fp}")))?,
                sensitivity: sens
                    .parse()
                    .map_err(|_| Error::Contract(format!("bad sensitivity value: {sens}")))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrocCurve { points })
}
