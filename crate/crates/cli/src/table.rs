//! Small deterministic CSV writer.
//!
//! Floats are formatted with Rust's shortest round-trip `Display`, so the
//! same numbers always produce the same bytes — the determinism contract
//! for every table the driver emits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// One CSV table: fixed header, rows of mixed string/float cells.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// A single cell; build rows with `Cell::from`.
pub enum Cell {
    Str(String),
    Float(f64),
    Int(i64),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
        }
    }
}

/// Shortest round-trip float formatting, with explicit NaN spelled out.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len(), "row width mismatch");
        self.rows.push(cells.iter().map(Cell::render).collect());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render())
            .map_err(|e| CliError::Config(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }
}
