//! CSV and JSON emission for the command-line front end.

use std::fs;
use std::path::Path;

use serde::Serialize;

/// A table of already-formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// RFC 4180 CSV followed by a `# config_hash=...` comment line.
    pub fn to_csv(&self, config_hash: &str) -> std::io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let mut bytes = w.into_inner().map_err(|e| e.into_error())?;
        bytes.extend_from_slice(format!("# config_hash={config_hash}\r\n").as_bytes());
        Ok(bytes)
    }

    /// Rows as an array of objects keyed by the header.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    serde_json::Value::Object(
                        self.header
                            .iter()
                            .cloned()
                            .zip(r.iter().map(|c| cell_value(c)))
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

/// Numbers stay numbers in JSON; everything else is a string.
fn cell_value(cell: &str) -> serde_json::Value {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => serde_json::Number::from_f64(v)
            .map(serde_json::Value::Number)
            .unwrap_or_else(|| serde_json::Value::String(cell.to_string())),
        _ => serde_json::Value::String(cell.to_string()),
    }
}

/// Shortest round-trip formatting; identical on every run.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}
