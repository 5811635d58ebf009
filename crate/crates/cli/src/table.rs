//! CSV output with a config-hash comment line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Column-named numeric table. Values print in shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = format!("# config_hash={config_hash}\n{}\n", self.columns.join(","));
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn write(&self, path: &Path, config_hash: &str) -> CliResult<()> {
        std::fs::write(path, self.to_csv(config_hash)).map_err(|e| CliError::io(path, e))
    }

    /// Parses a file written by [`Self::to_csv`]; returns the table and hash.
    pub fn parse(text: &str) -> CliResult<(Self, String)> {
        let mut lines = text.lines();
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("# config_hash="))
            .ok_or_else(|| CliError::Stale("CSV lacks a config_hash line".into()))?
            .to_string();
        let header = lines.next().ok_or_else(|| CliError::Missing("CSV header".into()))?;
        let mut t = Self {
            columns: header.split(',').map(str::to_string).collect(),
            rows: Vec::new(),
        };
        for l in lines {
            let row: Result<Vec<f64>, _> = l.split(',').map(str::parse::<f64>).collect();
            let row = row.map_err(|e| CliError::Config(format!("bad CSV value: {e}")))?;
            if row.len() != t.columns.len() {
                return Err(CliError::Config("ragged CSV row".into()));
            }
            t.rows.push(row);
        }
        Ok((t, hash))
    }
}
