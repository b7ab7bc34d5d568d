//! Experiment drivers. Each returns results, acceptance checks and CSV traces; [`run`] wraps
//! them in a worker pool and writes the artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::Value;
use spinglass_core::dynamics::Clock;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{io_err, Result};
use crate::report::{run_dir, Check, Report, Trace};

pub mod advice;
pub mod anneal;
pub mod functional;
pub mod localize;
pub mod rmt;
pub mod tap;
pub mod thresholds;

/// What an experiment produces before it is written out.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub traces: Vec<Trace>,
}

/// Runs the experiment named in `cfg` on the current thread pool.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Thresholds => thresholds::run(cfg),
        Experiment::Anneal => anneal::run(cfg),
        Experiment::Localize => localize::run(cfg),
        Experiment::RmtCheck => rmt::run(cfg),
        Experiment::Tap => tap::run(cfg),
        Experiment::Advice => advice::run(cfg),
        Experiment::FunctionalSuite => functional::run(cfg),
    }
}

/// Report plus the directory its artifacts were written to.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub report: Report,
    pub dir: PathBuf,
}

/// Resolves `cfg`, executes it with `cfg.workers` threads and writes `report.json` and the
/// traces under `out`.
pub fn run(cfg: ExperimentConfig, out: &Path) -> Result<RunArtifacts> {
    let cfg = cfg.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let start = Instant::now();
    let outcome = pool.install(|| execute(&cfg))?;
    let names: Vec<String> = outcome.traces.iter().map(|t| format!("{}.csv", t.name)).collect();
    let report = Report::new(cfg, outcome.results, outcome.checks, names.clone(), start.elapsed().as_secs_f64())?;
    let dir = run_dir(out, &report);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (t, name) in outcome.traces.iter().zip(&names) {
        t.write(&dir.join(name))?;
    }
    report.write(&dir.join("report.json"))?;
    Ok(RunArtifacts { report, dir })
}

/// Wall-clock source for per-stage timings.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn seconds(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let k = s.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_opnorm(m: &nalgebra::DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
