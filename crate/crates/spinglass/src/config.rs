//! Experiment configuration in TOML: global settings plus one parameter block per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinglass_core::MixtureFunction;

use crate::error::{config_err, io_err, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPINGLASS_OUT_DIR";

/// Output directory used when neither the command line, the config nor the environment set one.
pub const DEFAULT_OUT_DIR: &str = "spinglass-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Anneal,
    Localize,
    RmtCheck,
    Tap,
    Advice,
    Thresholds,
    FunctionalSuite,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Anneal => "anneal",
            Experiment::Localize => "localize",
            Experiment::RmtCheck => "rmt-check",
            Experiment::Tap => "tap",
            Experiment::Advice => "advice",
            Experiment::Thresholds => "thresholds",
            Experiment::FunctionalSuite => "functional-suite",
        }
    }

    fn needs_mixture(self) -> bool {
        matches!(self, Experiment::Anneal | Experiment::RmtCheck | Experiment::Tap | Experiment::Thresholds)
    }
}

/// Ordered `(p, gamma_p^2)` pairs plus an optional tilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub terms: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub tilt: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl MixtureConfig {
    pub fn build(&self) -> Result<MixtureFunction> {
        Ok(MixtureFunction::from_pairs(&self.terms)?.tilted(self.tilt)?)
    }

    /// Parses `"2:0.1,3:0.05"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (p, g) = part
                .split_once(':')
                .ok_or_else(|| config_err(format!("mixture term `{part}` is not of the form p:gamma_sq")))?;
            let p = p.trim().parse().map_err(|_| config_err(format!("mixture degree `{p}` is not an integer")))?;
            let g = g.trim().parse().map_err(|_| config_err(format!("mixture coefficient `{g}` is not a number")))?;
            terms.push((p, g));
        }
        if terms.is_empty() {
            return Err(config_err("mixture needs at least one p:gamma_sq term"));
        }
        Ok(Self { terms, tilt: 0.0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdsConfig {
    pub grid: usize,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        Self { grid: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub n: usize,
    pub beta_max: f64,
    /// Stage increment; defaults to the dimension-dependent schedule.
    pub delta: Option<f64>,
    pub stage_time: Option<f64>,
    pub step: Option<f64>,
    pub replicas: usize,
    /// Independent disorder draws, each with its own replicas.
    pub runs: usize,
    /// Keep every `energy_thin`-th energy in the trace of the first chain.
    pub energy_thin: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self { n: 40, beta_max: 1.0, delta: None, stage_time: None, step: None, replicas: 2, runs: 1, energy_thin: 100 }
    }
}

/// A finitely supported measure, generated or read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureConfig {
    Uniform {
        bits: usize,
    },
    Product {
        p_plus: Vec<f64>,
    },
    Gadget {
        bits: usize,
    },
    Points {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// `count` atoms with coordinates uniform in `[-1, 1]^dim` and uniform weights in `[0.1, 1]`,
    /// drawn from the experiment seed.
    RandomPoints {
        count: usize,
        dim: usize,
    },
    /// JSON of the form `{"bits": n, "weights": {"+-+": 0.2, ...}}`.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub measure: MeasureConfig,
    pub horizon: f64,
    /// Covariance cap `K` of the stopping rule; absent means twice `||Cov(pi0)||_op`.
    pub stop_k: Option<f64>,
    pub steps: usize,
    pub paths: usize,
    pub events: usize,
    pub functions: usize,
    pub martingale_tol: f64,
    pub trace_paths: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            measure: MeasureConfig::RandomPoints { count: 10, dim: 3 },
            horizon: 1.0,
            stop_k: None,
            steps: 100,
            paths: 1000,
            events: 5,
            functions: 5,
            martingale_tol: 0.02,
            trace_paths: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmtConfig {
    pub n: usize,
    pub draws: usize,
    pub mc_samples: usize,
    /// Allowed `|MC log Z - prediction|`; defaults to 1 for pure degree 2 and 1.5 otherwise.
    pub slack: Option<f64>,
    /// Fraction of draws that must fall within the slack.
    pub required_fraction: f64,
    /// Langevin steps after burn-in for the covariance comparison; 0 skips it.
    pub langevin_steps: usize,
    pub langevin_burn_in: usize,
    pub langevin_thin: usize,
    pub cov_rel_tol: f64,
    pub trace_tol: f64,
}

impl Default for RmtConfig {
    fn default() -> Self {
        Self {
            n: 24,
            draws: 1,
            mc_samples: 1_000_000,
            slack: None,
            required_fraction: 0.9,
            langevin_steps: 0,
            langevin_burn_in: 100_000,
            langevin_thin: 5,
            cov_rel_tol: 0.15,
            trace_tol: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapConfig {
    pub n: usize,
    pub t: f64,
    pub iota: Option<f64>,
    pub starts: usize,
    pub tol: f64,
    pub uniqueness_tol: f64,
    /// Symbolic dimension for the band calculus.
    pub band_n: f64,
    /// `eps` in `|a|, |b| <= eps N^{1/10}`.
    pub band_reach: f64,
    /// Grid points per axis in `[-reach, reach]`.
    pub band_grid: usize,
}

impl Default for TapConfig {
    fn default() -> Self {
        Self {
            n: 30,
            t: 1.0,
            iota: Some(0.25),
            starts: 10,
            tol: 1e-10,
            uniqueness_tol: 1e-6,
            band_n: 1e4,
            band_reach: 0.5,
            band_grid: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdviceConfig {
    pub dim: usize,
    /// Component means sit at `-separation e_1` and `+separation e_1`.
    pub separation: f64,
    /// Advice sample size; defaults to `sample_count(delta, p_*, eps)`.
    pub m: Option<usize>,
    pub delta: f64,
    pub eps: f64,
    pub horizon: f64,
    pub step: f64,
    pub runs: usize,
    pub cell: f64,
    pub margin: f64,
    pub checkpoints: usize,
    pub hist_bins: usize,
    pub tv_advice: f64,
    pub tv_adversarial: f64,
    pub success_fraction: f64,
}

impl Default for AdviceConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            separation: 10.0,
            m: None,
            delta: 0.1,
            eps: 0.25,
            horizon: 10.0,
            step: 0.01,
            runs: 50,
            cell: 0.1,
            margin: 6.0,
            checkpoints: 10,
            hist_bins: 40,
            tv_advice: 0.05,
            tv_adversarial: 0.4,
            success_fraction: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalConfig {
    /// Smallest hypercube dimension of the random chains.
    pub min_bits: usize,
    /// Largest hypercube dimension (at most 12); chain `k` uses
    /// `min_bits + k mod (bits - min_bits + 1)`.
    pub bits: usize,
    pub chains: usize,
    pub trials: usize,
    pub horizon: f64,
    pub grid: usize,
    /// Dimension of the two-ball gadget (at least 4).
    pub gadget_bits: usize,
    /// Extra measure to analyze alongside the random chains.
    pub measure: Option<MeasureConfig>,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        Self { min_bits: 2, bits: 6, chains: 20, trials: 200, horizon: 5.0, grid: 50, gadget_bits: 6, measure: None }
    }
}

fn one() -> usize {
    1
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<AnnealConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localize: Option<LocalizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmt_check: Option<RmtConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap: Option<TapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advice: Option<AdviceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional_suite: Option<FunctionalConfig>,
}

impl ExperimentConfig {
    /// A config for `experiment` with every block at its default and no mixture.
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        Self {
            experiment,
            seed,
            workers: 1,
            output_dir: None,
            mixture: None,
            thresholds: None,
            anneal: None,
            localize: None,
            rmt_check: None,
            tap: None,
            advice: None,
            functional_suite: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    /// Validates the global fields and fills the experiment's own block with defaults.
    pub fn resolve(mut self) -> Result<Self> {
        if self.seed > i64::MAX as u64 {
            return Err(config_err(format!("field `seed` must be at most {}", i64::MAX)));
        }
        if self.workers == 0 {
            return Err(config_err("field `workers` must be at least 1"));
        }
        if self.experiment.needs_mixture() {
            match &self.mixture {
                None => {
                    return Err(config_err(format!(
                        "missing field `mixture` (required by experiment `{}`)",
                        self.experiment.name()
                    )))
                }
                Some(m) => {
                    m.build().map_err(|e| config_err(format!("field `mixture`: {e}")))?;
                }
            }
        }
        match self.experiment {
            Experiment::Thresholds => {
                self.thresholds.get_or_insert_with(Default::default);
            }
            Experiment::Anneal => {
                self.anneal.get_or_insert_with(Default::default);
            }
            Experiment::Localize => {
                self.localize.get_or_insert_with(Default::default);
            }
            Experiment::RmtCheck => {
                self.rmt_check.get_or_insert_with(Default::default);
            }
            Experiment::Tap => {
                self.tap.get_or_insert_with(Default::default);
            }
            Experiment::Advice => {
                self.advice.get_or_insert_with(Default::default);
            }
            Experiment::FunctionalSuite => {
                self.functional_suite.get_or_insert_with(Default::default);
            }
        }
        Ok(self)
    }

    /// The mixture, which [`ExperimentConfig::resolve`] guarantees for the experiments that need it.
    pub fn mixture(&self) -> Result<MixtureFunction> {
        self.mixture
            .as_ref()
            .ok_or_else(|| {
                config_err(format!("missing field `mixture` (required by experiment `{}`)", self.experiment.name()))
            })?
            .build()
    }

    /// Output directory by precedence: explicit argument, config, environment, default.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_mixture_names_the_field() {
        let err = ExperimentConfig::from_toml_str("experiment = \"anneal\"\nseed = 1\n").unwrap_err();
        assert!(err.to_string().contains("`mixture`"), "{err}");
    }

    #[test]
    fn unknown_field_is_named() {
        let err = ExperimentConfig::from_toml_str("experiment = \"tap\"\nseed = 1\nsed = 2\n").unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
    }

    #[test]
    fn mixture_strings() {
        let m = MixtureConfig::parse("2:0.1, 3:0.05").unwrap();
        assert_eq!(m.terms, vec![(2, 0.1), (3, 0.05)]);
        assert!(MixtureConfig::parse("2-0.1").is_err());
    }
}
