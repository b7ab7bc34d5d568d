//! JSON reports and CSV traces.
//!
//! A report embeds the resolved config, the experiment results and the pass/fail checks. Its
//! `content_hash` is the SHA-256 of the canonical JSON of everything except the hash itself
//! and the wall-clock timing, so identical runs produce identical hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};

/// Semantic version of the report layout; bumped on any field change.
pub const SCHEMA_VERSION: &str = "1.0.0";

pub fn report_schema_version() -> &'static str {
    SCHEMA_VERSION
}

/// One acceptance property evaluated by an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

/// A CSV table written next to the report.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Trace {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(path))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub experiment: String,
    pub config: ExperimentConfig,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub results: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub traces: Vec<String>,
    pub content_hash: String,
    /// Excluded from `content_hash`.
    pub timing: Timing,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Canonical JSON: object keys sorted, no whitespace.
fn canonical(v: &impl Serialize) -> Result<Vec<u8>> {
    let value = serde_json::to_value(v)?;
    Ok(serde_json::to_vec(&value)?)
}

impl Report {
    pub fn new(
        config: ExperimentConfig,
        results: Value,
        checks: Vec<Check>,
        traces: Vec<String>,
        seconds: f64,
    ) -> Result<Self> {
        let mut r = Self {
            schema_version: SCHEMA_VERSION.to_string(),
            experiment: config.experiment.name().to_string(),
            config_hash: sha256_hex(&canonical(&config)?),
            config,
            passed: checks.iter().all(|c| c.passed),
            results,
            checks,
            traces,
            content_hash: String::new(),
            timing: Timing { seconds },
        };
        r.content_hash = r.compute_hash()?;
        Ok(r)
    }

    /// Hash over every field except `content_hash` and `timing`.
    pub fn compute_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("content_hash");
            map.remove("timing");
        }
        Ok(sha256_hex(&serde_json::to_vec(&v)?))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Directory holding one run's artifacts: `<out>/<experiment>-<first 12 hex of config hash>`.
pub fn run_dir(out: &Path, report: &Report) -> PathBuf {
    out.join(format!("{}-{}", report.experiment, &report.config_hash[..12]))
}

/// Shortest round-trip text of a float (`NaN` and infinities spelled out).
pub fn num(v: f64) -> String {
    format!("{v}")
}
