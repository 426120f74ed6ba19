//! Minimal reader for the CSV artifacts the pipeline writes.

use std::path::Path;

use tvar_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    /// Index of `name`; a missing column is a schema (configuration) error.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("artifact has no `{name}` column (columns: {})", self.headers.join(","))))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.column(name)?;
        Ok(self.rows.iter().map(|r| r.get(j).map_or("", String::as_str)).collect())
    }

    /// Numeric column; empty cells are `None`.
    pub fn numbers(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r.get(j).map_or("", String::as_str) {
                "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Data(format!("row {}: `{s}` in column `{name}` is not a number", i + 2))),
            })
            .collect()
    }
}
