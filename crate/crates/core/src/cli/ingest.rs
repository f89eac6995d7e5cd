//! CSV ingestion of price or return panels.

use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;

use crate::cli::CliError;
use crate::model::ReturnPanel;

/// Which columns to read from the file.
#[derive(Clone, Debug, Default)]
pub struct Columns<'a> {
    pub date: &'a str,
    /// Empty selects every column except the date column.
    pub assets: &'a [String],
    /// Appended to the assets when not already among them.
    pub extra: Option<&'a str>,
}

fn parse_date(raw: &str) -> Option<String> {
    let s = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.format("%Y-%m-%d").to_string());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
    ] {
        if let Ok(d) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(d.format("%Y-%m-%dT%H:%M:%S").to_string());
        }
    }
    None
}

/// Reads a panel from `path`; with `to_returns` the file holds prices and
/// log returns `ln(P_t / P_{t-1})` are returned (one row shorter).
pub fn ingest(path: &Path, cols: &Columns<'_>, to_returns: bool) -> Result<ReturnPanel, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    ingest_reader(file, cols, to_returns)
}

pub fn ingest_reader<R: std::io::Read>(
    reader: R,
    cols: &Columns<'_>,
    to_returns: bool,
) -> Result<ReturnPanel, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Csv(e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(format!("column '{name}' not found in header")))
    };
    let date_idx = find(cols.date)?;
    let mut names: Vec<String> = if cols.assets.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != date_idx)
            .map(|(_, h)| h.to_string())
            .collect()
    } else {
        cols.assets.to_vec()
    };
    if let Some(x) = cols.extra {
        if !names.iter().any(|n| n == x) {
            names.push(x.to_string());
        }
    }
    if names.is_empty() {
        return Err(CliError::MissingColumn("no asset columns".into()));
    }
    let idx = names
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut dates = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let rec = rec.map_err(|e| CliError::Csv(e.to_string()))?;
        let raw_date = rec.get(date_idx).unwrap_or("");
        let date = parse_date(raw_date).ok_or_else(|| {
            CliError::Csv(format!("line {line}: '{raw_date}' is not an ISO-8601 date"))
        })?;
        let mut row = Vec::with_capacity(idx.len());
        for (&j, name) in idx.iter().zip(&names) {
            let cell = rec.get(j).unwrap_or("");
            if cell.is_empty() {
                return Err(CliError::MissingValue(format!(
                    "line {line}, column '{name}': empty cell"
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::MissingValue(format!(
                    "line {line}, column '{name}': '{cell}' is not a number"
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::MissingValue(format!(
                    "line {line}, column '{name}': non-finite value"
                )));
            }
            row.push(v);
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(CliError::DateOrder(format!(
                    "line {line}: {date} does not follow {prev}"
                )));
            }
        }
        dates.push(date);
        data.push(row);
    }

    if to_returns {
        for (k, row) in data.iter().enumerate() {
            if let Some(j) = row.iter().position(|&v| v <= 0.0) {
                return Err(CliError::MissingValue(format!(
                    "line {}, column '{}': price must be positive",
                    k + 2,
                    names[j]
                )));
            }
        }
        data = data
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a / b).ln()).collect())
            .collect();
        dates.remove(0);
    }
    let (t, p) = (data.len(), names.len());
    if t < 2 {
        return Err(CliError::InsufficientData(format!("{t} usable rows")));
    }
    let values = DMatrix::from_fn(t, p, |i, j| data[i][j]);
    ReturnPanel::new(dates, names, values).map_err(|e| CliError::InsufficientData(e.to_string()))
}
