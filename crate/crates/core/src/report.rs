//! Deterministic CSV and JSON report files.
//!
//! Floats are written as `{:.12e}` so that reruns of the same experiment
//! produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

/// Scientific notation with twelve fractional digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.12e}")
}

/// Header plus string rows, written through `csv` with `\n` terminators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
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

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`CsvTable::write`].
    pub fn read(path: &Path) -> std::io::Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// A named pass/fail band.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub band: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, band: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            band: band.into(),
            pass: pass && !value.is_nan(),
        }
    }

    /// Passes when `lo <= value <= hi`.
    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(
            name,
            value,
            format!("[{lo}, {hi}]"),
            (lo..=hi).contains(&value),
        )
    }
}

/// Summary written next to the CSV output of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub model: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Summary {
    pub fn new(experiment: &str, model: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            model: model.into(),
            seed,
            files: Vec::new(),
            checks: Vec::new(),
            pass: true,
        }
    }

    pub fn check(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}
