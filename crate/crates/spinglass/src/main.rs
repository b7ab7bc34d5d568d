//! `spinglass` command line: runs an experiment from a TOML config or from flags, writes the
//! report and traces, and exits 0 when every check passes, 2 when a check fails and 1 on error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinglass::config::{Experiment, ExperimentConfig, MixtureConfig};
use spinglass::disorder::{write_raw, DisorderDescriptor};
use spinglass::error::{config_err, io_err, Result};
use spinglass::experiments;

#[derive(Parser)]
#[command(name = "spinglass", version, about = "Samplers and diagnostics for spherical spin glasses")]
struct Cli {
    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides the config and SPINGLASS_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every experiment subcommand.
#[derive(Args)]
struct Common {
    /// Base TOML config; flags given here override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mixture as `p:gamma_sq` pairs, e.g. `2:0.1,3:0.05`.
    #[arg(long)]
    mixture: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Regime classification and inverse-temperature thresholds.
    Thresholds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Annealed Langevin replicas.
    Anneal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        beta_max: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        stage_time: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Stochastic localization martingale and variance checks.
    Localize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Random-matrix predictions against Monte Carlo.
    RmtCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        langevin_steps: Option<usize>,
    },
    /// TAP fixed points and band geometry.
    Tap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        iota: Option<f64>,
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Langevin with advice samples on a two-well target.
    Advice {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Functional-inequality suite on small hypercube chains.
    FunctionalSuite {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bits: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Write the raw disorder tensors of a draw plus a JSON descriptor.
    Disorder {
        #[arg(long)]
        mixture: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Destination of the raw dump; the descriptor goes next to it with a `.json` suffix.
        #[arg(long)]
        file: PathBuf,
    },
}

fn base(exp: Experiment, common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            toml::from_str::<ExperimentConfig>(&text).map_err(|e| config_err(e.to_string()))?
        }
        None => ExperimentConfig::new(exp, 0),
    };
    if cfg.experiment != exp {
        return Err(config_err(format!(
            "config describes experiment `{}`, not `{}`",
            cfg.experiment.name(),
            exp.name()
        )));
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = &common.mixture {
        cfg.mixture = Some(MixtureConfig::parse(m)?);
    }
    cfg.resolve()
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build(command: Command) -> Result<Option<ExperimentConfig>> {
    let cfg = match command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config).map_err(io_err(&config))?;
            toml::from_str::<ExperimentConfig>(&text).map_err(|e| config_err(e.to_string()))?
        }
        Command::Thresholds { common, grid } => {
            let mut cfg = base(Experiment::Thresholds, &common)?;
            let b = cfg.thresholds.get_or_insert_with(Default::default);
            set(&mut b.grid, grid);
            cfg
        }
        Command::Anneal { common, n, beta_max, delta, stage_time, step, replicas, runs } => {
            let mut cfg = base(Experiment::Anneal, &common)?;
            let b = cfg.anneal.get_or_insert_with(Default::default);
            set(&mut b.n, n);
            set(&mut b.beta_max, beta_max);
            set(&mut b.delta, delta.map(Some));
            set(&mut b.stage_time, stage_time.map(Some));
            set(&mut b.step, step.map(Some));
            set(&mut b.replicas, replicas);
            set(&mut b.runs, runs);
            cfg
        }
        Command::Localize { common, horizon, paths, steps } => {
            let mut cfg = base(Experiment::Localize, &common)?;
            let b = cfg.localize.get_or_insert_with(Default::default);
            set(&mut b.horizon, horizon);
            set(&mut b.paths, paths);
            set(&mut b.steps, steps);
            cfg
        }
        Command::RmtCheck { common, n, draws, mc_samples, langevin_steps } => {
            let mut cfg = base(Experiment::RmtCheck, &common)?;
            let b = cfg.rmt_check.get_or_insert_with(Default::default);
            set(&mut b.n, n);
            set(&mut b.draws, draws);
            set(&mut b.mc_samples, mc_samples);
            set(&mut b.langevin_steps, langevin_steps);
            cfg
        }
        Command::Tap { common, n, t, iota, starts } => {
            let mut cfg = base(Experiment::Tap, &common)?;
            let b = cfg.tap.get_or_insert_with(Default::default);
            set(&mut b.n, n);
            set(&mut b.t, t);
            set(&mut b.iota, iota.map(Some));
            set(&mut b.starts, starts);
            cfg
        }
        Command::Advice { common, dim, runs, m } => {
            let mut cfg = base(Experiment::Advice, &common)?;
            let b = cfg.advice.get_or_insert_with(Default::default);
            set(&mut b.dim, dim);
            set(&mut b.runs, runs);
            set(&mut b.m, m.map(Some));
            cfg
        }
        Command::FunctionalSuite { common, bits, chains } => {
            let mut cfg = base(Experiment::FunctionalSuite, &common)?;
            let b = cfg.functional_suite.get_or_insert_with(Default::default);
            set(&mut b.bits, bits);
            set(&mut b.chains, chains);
            cfg
        }
        Command::Disorder { mixture, n, seed, file } => {
            let desc = DisorderDescriptor { seed, n, mixture: MixtureConfig::parse(&mixture)? };
            desc.mixture.build()?;
            write_raw(&file, &desc)?;
            let json_path = file.with_extension("json");
            std::fs::write(&json_path, serde_json::to_string_pretty(&desc)? + "\n").map_err(io_err(&json_path))?;
            println!("wrote {} and {}", file.display(), json_path.display());
            return Ok(None);
        }
    };
    Ok(Some(cfg))
}

fn main_inner(cli: Cli) -> Result<bool> {
    let Some(mut cfg) = build(cli.command)? else {
        return Ok(true);
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let out = cfg.output_dir(cli.out.as_deref());
    let art = experiments::run(cfg, Path::new(&out))?;
    for c in &art.report.checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("report: {}", art.dir.join("report.json").display());
    println!("content hash: {}", art.report.content_hash);
    Ok(art.report.passed)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
