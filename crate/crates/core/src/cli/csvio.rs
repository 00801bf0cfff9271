//! Numeric CSV tables: a header row, '.' decimals, every cell a finite number.

use std::path::Path;

use crate::data::{Dataset, Inputs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if headers.len() != columns.len() {
            return Err(Error::invalid("one header per column required"));
        }
        if let Some(n) = columns.first().map(Vec::len) {
            if columns.iter().any(|c| c.len() != n) {
                return Err(Error::invalid("columns differ in length"));
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.index(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::data(format!("column '{name}' not found")))
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.index(&name).is_some() {
            return Err(Error::data(format!("duplicate column '{name}'")));
        }
        if !self.columns.is_empty() && values.len() != self.nrows() {
            return Err(Error::invalid(format!("column '{name}' has {} rows, table has {}", values.len(), self.nrows())));
        }
        self.headers.push(name);
        self.columns.push(values);
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            headers: self.headers.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
        }
    }

    /// Dataset from every column except `target` and the listed extras.
    pub fn dataset(&self, target: &str, exclude: &[&str]) -> Result<Dataset> {
        let y = self.column(target)?.to_vec();
        let mut names = Vec::new();
        let mut cols = Vec::new();
        for (h, c) in self.headers.iter().zip(&self.columns) {
            if h != target && !exclude.contains(&h.as_str()) {
                names.push(h.clone());
                cols.push(c.clone());
            }
        }
        Dataset::new(Inputs::new(names, cols)?, y)
    }
}

/// Read a table; any empty, non-numeric or non-finite cell is rejected with
/// its 1-based data row number.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(Error::data(format!("{}: empty header", path.display())));
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("{}: row {}: {e}", path.display(), row + 1)))?;
        if rec.len() != headers.len() {
            return Err(Error::data(format!("{}: row {}: expected {} fields, found {}", path.display(), row + 1, headers.len(), rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::data(format!("{}: row {}, column '{}': '{cell}' is not a number", path.display(), row + 1, headers[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!("{}: row {}, column '{}': non-finite value", path.display(), row + 1, headers[j])));
            }
            columns[j].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    Table::new(headers, columns)
}

/// Shortest representation that parses back to the same f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    w.write_record(&table.headers).map_err(err)?;
    for r in 0..table.nrows() {
        w.write_record(table.columns.iter().map(|c| fmt_f64(c[r]))).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}
