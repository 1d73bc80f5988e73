//! Tabular results and their CSV form.
//!
//! Layout: `# key: value` metadata lines, one header line, then rows.
//! Floats are written with 17 significant digits so that parsing the file
//! back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Columns written as integers.
const INTEGER_COLUMNS: &[&str] = &["n_traj", "step"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { metadata: Vec::new(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let value = value.to_string().replace(['\n', '\r'], " ");
        self.metadata.push((key.into(), value));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension(format!(
                "row has {} values but the table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        let integer: Vec<bool> = self.columns.iter().map(|c| INTEGER_COLUMNS.contains(&c.as_str())).collect();
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                if integer[j] && v.fract() == 0.0 && v.abs() < 1e15 {
                    let _ = write!(out, "{}", *v as i64);
                } else {
                    let _ = write!(out, "{v:.16e}");
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    let mut lines = text.lines();
    let header = loop {
        match lines.next() {
            Some(l) if l.starts_with('#') => {
                let body = l[1..].trim_start();
                let (k, v) = body
                    .split_once(": ")
                    .or_else(|| body.strip_suffix(':').map(|k| (k, "")))
                    .ok_or_else(|| Error::Config(format!("malformed metadata line '{l}'")))?;
                table.metadata.push((k.to_string(), v.to_string()));
            }
            Some(l) => break l,
            None => return Err(Error::Config("missing header line".into())),
        }
    };
    table.columns = header.split(',').map(str::to_string).collect();
    for (i, l) in lines.enumerate() {
        if l.is_empty() {
            continue;
        }
        let row = l
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("row {}: '{s}': {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        table.push_row(row)?;
    }
    Ok(table)
}
