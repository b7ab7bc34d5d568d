//! Stochastic localization on a discrete measure: martingale property of event masses and
//! variance conservation up to the stopping time.

use rand::Rng;
use serde_json::json;
use spinglass_core::localization::{cov_opnorm, event_martingale, stopped_path, variance_conservation_many};

use super::Outcome;
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::measures::build_measure;
use crate::report::{num, Check, Trace};
use crate::seeds::SeedTree;

/// Default stopping cap as a multiple of the initial covariance norm, so paths start below it.
const DEFAULT_K_FACTOR: f64 = 2.0;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let l = cfg.localize.clone().unwrap_or_default();
    let seeds = SeedTree::new(cfg.seed);
    let pi0 = build_measure(&l.measure, &seeds)?;
    let size = pi0.len();
    if size < 2 {
        return Err(config_err("localization needs a measure with at least two atoms"));
    }

    let mut rng = seeds.stream("events", 0);
    let events: Vec<Vec<bool>> = (0..l.events)
        .map(|_| loop {
            let e: Vec<bool> = (0..size).map(|_| rng.random_bool(0.5)).collect();
            if e.iter().any(|b| *b) && !e.iter().all(|b| *b) {
                break e;
            }
        })
        .collect();
    let mut rng = seeds.stream("functions", 0);
    let functions: Vec<Vec<f64>> =
        (0..l.functions).map(|_| (0..size).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let cov0 = cov_opnorm(&pi0);
    let k = l.stop_k.unwrap_or(DEFAULT_K_FACTOR * cov0);
    if k.is_nan() || k <= 0.0 {
        return Err(config_err("localization needs stop_k > 0"));
    }
    let mart = event_martingale(&pi0, &events, l.horizon, l.steps, l.paths, &mut seeds.chain(0, 0))?;
    let vc = variance_conservation_many(&pi0, &functions, l.horizon, k, l.steps, l.paths, &mut seeds.chain(0, 1))?;

    let mut trace = Trace::new("localization_paths", &["path", "t", "y_norm", "cov_opnorm", "stopped"]);
    for p in 0..l.trace_paths {
        let path = stopped_path(&pi0, l.horizon, l.steps, k, &mut seeds.chain(1, p as u64))?;
        for (i, t) in path.times.iter().enumerate() {
            let y = path.y[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            let stopped = path.stopped && i + 1 == path.times.len();
            trace.push([p.to_string(), num(*t), num(y), num(path.cov_opnorm[i]), (stopped as u8).to_string()]);
        }
    }

    let worst = mart.iter().fold(0.0f64, |a, e| a.max(e.deviation()));
    let violated = vc.iter().filter(|v| v.violated).count();
    let checks = vec![
        Check::new(
            "event_martingale",
            worst <= l.martingale_tol,
            format!("max |E mu_T(A) - pi0(A)| = {worst} vs {}", l.martingale_tol),
        ),
        Check::new("variance_conservation", violated == 0, format!("{violated} of {} functions violated", vc.len())),
    ];
    let results = json!({
        "atoms": size,
        "stop_k": k,
        "initial_cov_opnorm": cov0,
        "events": mart.iter().map(|e| json!({"prior": e.prior, "mean": e.mean, "std_err": e.std_err})).collect::<Vec<_>>(),
        "variance_ratios": vc.iter().map(|v| json!({
            "ratio": v.ratio, "std_err": v.std_err, "lower_bound": v.lower_bound, "violated": v.violated,
        })).collect::<Vec<_>>(),
        "max_martingale_deviation": worst,
    });
    Ok(Outcome { results, checks, traces: vec![trace] })
}
