//! Batch experiment runner: one JSON config in, CSV tables and a JSON summary out.

pub mod config;
mod scenarios;

pub use config::{ExperimentConfig, Scenario};

use fwl_core::weights::fmt_num;
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error(transparent)]
    Core(#[from] fwl_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

/// CSV table with a mandatory header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Column by header name.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub pass: bool,
    pub wall_clock_seconds: f64,
    pub metrics: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<String>,
    /// Config with every default resolved.
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub tables: Vec<Table>,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match self.report.metrics.get(name)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.parse().ok(),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            0
        } else {
            2
        }
    }

    /// Writes `<table>.csv` files and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut out = Vec::new();
        for t in &self.tables {
            let path = dir.join(t.file_name());
            std::fs::write(&path, t.to_csv()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            out.push(path);
        }
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&self.report).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        out.push(path);
        Ok(out)
    }
}

/// Collects metrics, checks and tables while a scenario runs.
#[derive(Debug, Default)]
pub(crate) struct Recorder {
    metrics: BTreeMap<String, Value>,
    checks: Vec<Check>,
    tables: Vec<Table>,
}

impl Recorder {
    pub(crate) fn metric(&mut self, name: &str, v: f64) {
        let value = if v.is_finite() {
            serde_json::Number::from_f64(v).map(Value::Number).unwrap()
        } else {
            Value::String(fmt_num(v))
        };
        self.metrics.insert(name.to_string(), value);
    }

    pub(crate) fn label(&mut self, name: &str, v: impl Into<String>) {
        self.metrics.insert(name.to_string(), Value::String(v.into()));
    }

    pub(crate) fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        });
    }

    pub(crate) fn table(&mut self, t: Table) {
        self.tables.push(t);
    }
}

/// Runs one scenario in the current rayon pool.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.params.validate()?;
    let mut rec = Recorder::default();
    scenarios::dispatch(&mut cfg, &mut rec)?;
    let pass = rec.checks.iter().all(|c| c.pass);
    let report = RunReport {
        scenario: cfg.scenario,
        pass,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        metrics: rec.metrics,
        checks: rec.checks,
        tables: rec.tables.iter().map(|t| t.file_name()).collect(),
        config: cfg,
    };
    Ok(RunOutput {
        report,
        tables: rec.tables,
    })
}

/// Runs inside a dedicated pool with `threads` workers.
pub fn run_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(|| run_config(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub required_keys: Vec<&'static str>,
    pub statement: &'static str,
}

pub fn list_scenarios() -> Vec<ScenarioInfo> {
    Scenario::ALL
        .iter()
        .map(|s| ScenarioInfo {
            name: s.name(),
            required_keys: s.required_keys().to_vec(),
            statement: s.statement(),
        })
        .collect()
}

pub fn format_scenarios() -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<20} {:<18} {}\n", "scenario", "required", "probes"));
    for s in list_scenarios() {
        let keys = if s.required_keys.is_empty() {
            "-".to_string()
        } else {
            s.required_keys.join(",")
        };
        out.push_str(&format!("{:<20} {:<18} {}\n", s.name, keys, s.statement));
    }
    out
}
