use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::commands::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Numerical(format!("{name}: {e}")))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// CSV with a header row; numbers use the shortest round-trip representation.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        w.write_record(&self.header)
            .map_err(|e| CliError::csv(&path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
