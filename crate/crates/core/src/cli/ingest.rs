use std::path::Path;

use crate::columnar::{Dataset, FeatureColumn};
use crate::error::{Error, Result};

/// A parsed CSV file: one contiguous `f64` buffer per column.
///
/// These buffers are the only copy of the values; datasets and side tables
/// attach to them without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn parse_cell(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "NaN" {
        return Some(f64::NAN);
    }
    cell.parse::<f64>().ok()
}

/// Read a headed numeric CSV. Empty cells and `NaN` are missing values.
pub fn ingest_csv(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) => Error::Io(format!("{}: {io}", path.display())),
            _ => Error::ParseError(e.to_string()),
        })?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ParseError(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(Error::SchemaError(format!("{}: missing header row", path.display())));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::ParseError(format!("row {row}: {e}")))?;
        if record.len() != names.len() {
            return Err(Error::ParseError(format!(
                "row {row}: {} fields, header has {}",
                record.len(),
                names.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| {
                Error::ParseError(format!("row {row}, column {}: cannot parse `{cell}`", names[c]))
            })?;
            columns[c].push(v);
        }
    }
    Ok(CsvTable { names, columns })
}

impl CsvTable {
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        Self { names, columns }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::SchemaError(format!("no column named `{name}`")))
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }

    pub fn column(&self, name: &str) -> Result<FeatureColumn<'_>> {
        FeatureColumn::from_f64(self.values(name)?)
    }

    /// Attach every column except `label` and `exclude` as a feature, with `label` as the target.
    pub fn dataset(&self, label: Option<&str>, exclude: &[&str]) -> Result<Dataset<'_>> {
        if self.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let labels = label.map(|l| self.column(l)).transpose()?;
        let mut columns = Vec::new();
        let mut names = Vec::new();
        for (n, values) in self.names.iter().zip(&self.columns) {
            if Some(n.as_str()) == label || exclude.contains(&n.as_str()) {
                continue;
            }
            columns.push(FeatureColumn::from_f64(values)?);
            names.push(n.clone());
        }
        Dataset::new(columns, names, labels)
    }
}
