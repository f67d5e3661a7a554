//! Result rows, CSV serialization and min-max normalization.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricReport;

/// One condition's corpus mean, columns EMD, CC, NSS, KLD, SIM.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub label: String,
    pub values: [Option<f64>; 5],
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerImageRow {
    pub image_id: String,
    pub label: String,
    pub report: MetricReport,
}

/// Decimal rendering with 10 significant digits.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (9 - exponent).max(0) as usize;
    format!("{v:.decimals$}")
}

fn cell(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

/// Arithmetic mean per column. A column is empty when any row lacks it.
pub fn aggregate(label: &str, reports: &[MetricReport]) -> AggregateRow {
    let mut values = [None; 5];
    if !reports.is_empty() {
        for (col, slot) in values.iter_mut().enumerate() {
            let column: Option<Vec<f64>> = reports.iter().map(|r| r.values()[col]).collect();
            *slot = column.map(|c| c.iter().sum::<f64>() / c.len() as f64);
        }
    }
    AggregateRow {
        label: label.to_string(),
        values,
    }
}

/// The metric line printed by `sad evaluate`.
pub fn report_line(report: &MetricReport) -> String {
    report.values().map(cell).join(",")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["condition"];
    header.extend(MetricReport::COLUMNS);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut record = vec![row.label.clone()];
        record.extend(row.values.iter().map(|v| cell(*v)));
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_per_image_csv(path: &Path, rows: &[PerImageRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["image_id", "condition"];
    header.extend(MetricReport::COLUMNS);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let mut record = vec![row.image_id.clone(), row.label.clone()];
        record.extend(row.report.values().iter().map(|v| cell(*v)));
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_cell(s: &str, path: &Path) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        return Ok(None);
    }
    s.trim()
        .parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("{}: bad number `{s}`", path.display())))
}

/// Reads a table written by [`write_aggregate_csv`].
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != 6 {
            return Err(Error::Config(format!(
                "{}: expected 6 columns, got {}",
                path.display(),
                record.len()
            )));
        }
        let mut values = [None; 5];
        for (i, v) in values.iter_mut().enumerate() {
            *v = parse_cell(&record[i + 1], path)?;
        }
        rows.push(AggregateRow {
            label: record[0].to_string(),
            values,
        });
    }
    Ok(rows)
}

/// Maps every metric column independently onto [0, 1]; constant columns
/// become 0 and empty cells stay empty.
pub fn min_max_normalize(rows: &[AggregateRow]) -> Result<Vec<AggregateRow>> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalization needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let mut out = rows.to_vec();
    for col in 0..5 {
        let present = rows.iter().filter_map(|r| r.values[col]);
        let (lo, hi) = present.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        for row in &mut out {
            if let Some(v) = row.values[col].as_mut() {
                *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
            }
        }
    }
    Ok(out)
}
