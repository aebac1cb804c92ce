//! CSV readers and writers for panels, matrices and report series.
//!
//! Numbers are written with 12 significant digits in their shortest decimal form, so a
//! file read back and written again is byte-identical.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Rounds to 12 significant digits and prints the shortest string that parses back to
/// the rounded value.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// Reads a panel file: header `date,id_1,...,id_N`, ISO dates ascending, numeric cells.
pub fn read_panel(path: &Path) -> Result<ReturnPanel> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_panel(file, &path.display().to_string())
}

pub fn parse_panel(reader: impl std::io::Read, name: &str) -> Result<ReturnPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse(format!("{name}: header needs a date column and at least one series")));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut cells = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // Line numbers count the header as line 1.
        let line = r + 2;
        let record = record.map_err(|e| Error::Parse(format!("{name}: line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Parse(format!(
                "{name}: line {line}: expected {} cells, found {}",
                header.len(),
                record.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|_| {
            Error::Parse(format!("{name}: line {line}, column date: invalid date {:?}", &record[0]))
        })?;
        dates.push(date);
        for (c, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Parse(format!(
                    "{name}: line {line}, column {}: invalid number {cell:?}",
                    header[c].to_string()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "{name}: line {line}, column {}: non-finite value",
                    &header[c]
                )));
            }
            cells.push(v);
        }
    }
    if dates.is_empty() {
        return Err(Error::Parse(format!("{name}: no data rows")));
    }
    let values = DMatrix::from_row_slice(dates.len(), ids.len(), &cells);
    ReturnPanel::new(dates, ids, values).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{name}: {m}")),
        other => other,
    })
}

pub fn write_panel(path: &Path, panel: &ReturnPanel) -> Result<()> {
    let mut out = String::from("date");
    for id in &panel.asset_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (t, date) in panel.dates.iter().enumerate() {
        out.push_str(&date.format(DATE_FORMAT).to_string());
        for i in 0..panel.n_assets() {
            out.push(',');
            out.push_str(&fmt_num(panel.values[(t, i)]));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Square or rectangular matrix with a header of column identifiers.
pub fn write_matrix(path: &Path, ids: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut out = ids.join(",");
    out.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| fmt_num(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Two-column `asset_id,<label>` table.
pub fn write_labeled_vector(path: &Path, ids: &[String], label: &str, values: &[f64]) -> Result<()> {
    let mut out = format!("asset_id,{label}\n");
    for (id, v) in ids.iter().zip(values) {
        out.push_str(&format!("{id},{}\n", fmt_num(*v)));
    }
    write_file(path, &out)
}

/// Reads a single return series: the last column of a CSV file with a header row.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Io(format!("{name}: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers()?.clone();
    let col = header.len().checked_sub(1).ok_or_else(|| Error::Parse(format!("{name}: empty header")))?;
    let mut out = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::Parse(format!("{name}: line {line}: {e}")))?;
        let cell = record.get(col).unwrap_or("");
        let v: f64 = cell.parse().map_err(|_| {
            Error::Parse(format!("{name}: line {line}, column {}: invalid number {cell:?}", &header[col]))
        })?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("{name}: line {line}, column {}: non-finite value", &header[col])));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
