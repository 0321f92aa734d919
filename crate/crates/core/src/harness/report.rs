//! Comparison rows, tables and their CSV/JSON export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::{Error, Result};

pub const SCHEMA: &str = "qwgrowth.report";
pub const SCHEMA_VERSION: u32 = 1;
pub const ROWS_HEADER: &str = "quantity,comparison,formula,estimate,se,z,tolerance,pass";

/// How a row's estimate is judged against its formula value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// |estimate − formula| ≤ tolerance.
    Abs,
    /// |estimate − formula| ≤ tolerance·|formula|.
    Rel,
    /// |estimate − formula|/se < tolerance.
    Z,
    /// estimate ≤ tolerance (formula unused).
    AtMost,
    /// estimate ≥ tolerance (formula unused).
    AtLeast,
}

impl Comparison {
    pub fn name(self) -> &'static str {
        match self {
            Comparison::Abs => "abs",
            Comparison::Rel => "rel",
            Comparison::Z => "z",
            Comparison::AtMost => "at-most",
            Comparison::AtLeast => "at-least",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub quantity: String,
    pub comparison: Comparison,
    pub formula: f64,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl Row {
    fn finish(
        quantity: String,
        comparison: Comparison,
        formula: f64,
        estimate: f64,
        se: Option<f64>,
        tolerance: f64,
    ) -> Self {
        let diff = (estimate - formula).abs();
        let z = se.map(|s| (estimate - formula) / s);
        let pass = match comparison {
            Comparison::Abs => diff <= tolerance,
            Comparison::Rel => diff <= tolerance * formula.abs(),
            Comparison::Z => z.is_some_and(|z| z.abs() < tolerance),
            Comparison::AtMost => estimate <= tolerance,
            Comparison::AtLeast => estimate >= tolerance,
        };
        Row { quantity, comparison, formula, estimate, se, z, tolerance, pass }
    }

    pub fn abs(quantity: impl Into<String>, formula: f64, estimate: f64, tol: f64) -> Self {
        Self::finish(quantity.into(), Comparison::Abs, formula, estimate, None, tol)
    }

    pub fn rel(quantity: impl Into<String>, formula: f64, estimate: f64, tol: f64) -> Self {
        Self::finish(quantity.into(), Comparison::Rel, formula, estimate, None, tol)
    }

    pub fn z(quantity: impl Into<String>, formula: f64, estimate: f64, se: f64, tol: f64) -> Self {
        Self::finish(quantity.into(), Comparison::Z, formula, estimate, Some(se), tol)
    }

    pub fn at_most(quantity: impl Into<String>, estimate: f64, bound: f64) -> Self {
        Self::finish(quantity.into(), Comparison::AtMost, bound, estimate, None, bound)
    }

    pub fn at_least(quantity: impl Into<String>, estimate: f64, bound: f64) -> Self {
        Self::finish(quantity.into(), Comparison::AtLeast, bound, estimate, None, bound)
    }
}

/// Cell of an output table; integers stay integers in CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    /// Not applicable; empty in CSV, null in JSON.
    Empty,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn header(&self) -> String {
        self.columns.join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub available_threads: usize,
    pub debug_assertions: bool,
}

impl Environment {
    pub fn capture() -> Self {
        Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            available_threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            debug_assertions: cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub schema_version: u32,
    pub run_id: String,
    pub rows: Vec<Row>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
    /// Set when a pipeline failed part way; rows up to the failure are kept.
    pub error: Option<String>,
    pub elapsed_seconds: f64,
    pub runtime_limit_seconds: Option<f64>,
    pub environment: Environment,
    pub config: ExperimentConfig,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        Report {
            schema: SCHEMA.into(),
            schema_version: SCHEMA_VERSION,
            run_id: config.run_id(),
            rows: Vec::new(),
            tables: Vec::new(),
            notes: Vec::new(),
            error: None,
            elapsed_seconds: 0.0,
            runtime_limit_seconds: None,
            environment: Environment::capture(),
            config: config.clone(),
        }
    }

    pub fn within_runtime(&self) -> bool {
        self.runtime_limit_seconds.map_or(true, |l| self.elapsed_seconds <= l)
    }

    /// All rows pass, no error, runtime limit respected.
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.rows.iter().all(|r| r.pass) && self.within_runtime()
    }

    pub fn failures(&self) -> Vec<&Row> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text)?;
        if r.schema != SCHEMA || r.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported report schema {} v{}", r.schema, r.schema_version)));
        }
        Ok(r)
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn fmt_cell(c: &Cell) -> String {
    match c {
        Cell::Int(i) => i.to_string(),
        Cell::Float(x) => fmt_f(*x),
        Cell::Empty => String::new(),
    }
}

pub fn write_rows_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROWS_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.quantity.clone(),
            r.comparison.name().to_string(),
            fmt_f(r.formula),
            fmt_f(r.estimate),
            fmt_opt(r.se),
            fmt_opt(r.z),
            fmt_f(r.tolerance),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_csv<W: Write>(t: &Table, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&t.columns)?;
    for r in &t.rows {
        w.write_record(r.iter().map(fmt_cell))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Write the report under `dir`: `rows.csv` plus one CSV per table, or `report.json`.
pub fn export(report: &Report, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    match format {
        Format::Csv => {
            let p = dir.join("rows.csv");
            write_rows_csv(&report.rows, fs::File::create(&p)?)?;
            files.push(p);
            for t in &report.tables {
                let p = dir.join(format!("{}.csv", t.name));
                write_table_csv(t, fs::File::create(&p)?)?;
                files.push(p);
            }
        }
        Format::Json => {
            let p = dir.join("report.json");
            let mut f = fs::File::create(&p)?;
            serde_json::to_writer_pretty(&mut f, report)?;
            f.write_all(b"\n")?;
            files.push(p);
        }
    }
    Ok(files)
}
