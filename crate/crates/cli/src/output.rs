//! CSV tables and `key = value` summaries.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Float formatting shared by every table: 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a numeric table with a header row.
pub fn write_table(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        w.write_record(row.iter().map(|v| fmt_float(*v)))?;
    }
    w.flush()
}

/// Writes a table whose cells are already strings.
pub fn write_text_table(path: &Path, columns: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}

/// A tolerance check as reported in a summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckFlag {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckFlag {
    /// Passes when `value < tolerance`.
    pub fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value < tolerance }
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value >= tolerance }
    }
}

/// Everything a run reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
    pub checks: Vec<CheckFlag>,
    pub files: Vec<PathBuf>,
}

impl Summary {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.set(key, fmt_float(v));
    }

    pub fn check(&mut self, flag: CheckFlag) {
        self.checks.push(flag);
    }

    /// True when every enabled check passes.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&mut self, dir: &Path, name: &str, columns: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
        let path = dir.join(name);
        write_table(&path, columns, rows)?;
        self.files.push(path);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for f in &self.files {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            out.push_str(&format!("file = {name}\n"));
        }
        for c in &self.checks {
            out.push_str(&format!("check.{}.value = {}\n", c.name, fmt_float(c.value)));
            out.push_str(&format!("check.{}.tolerance = {}\n", c.name, fmt_float(c.tolerance)));
            out.push_str(&format!("check.{}.pass = {}\n", c.name, c.pass));
        }
        out.push_str(&format!("pass = {}\n", self.passed()));
        out
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join("summary.txt");
        fs::write(&path, self.render())?;
        Ok(path)
    }
}
