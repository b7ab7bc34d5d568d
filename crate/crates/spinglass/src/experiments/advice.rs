//! Langevin started from advice samples versus an adversarial start on a two-well target.

use rayon::prelude::*;
use serde_json::json;
use spinglass_core::advice::{run_advice, sample_count, AdviceOptions, AdviceTrace, InitMode, MixtureTarget};

use super::Outcome;
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::report::{num, Check, Trace};
use crate::seeds::SeedTree;

/// Constant in the advice sample-size bound used when `m` is not set.
const SAMPLE_CONSTANT: f64 = 10.0;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let a = cfg.advice.clone().unwrap_or_default();
    if a.runs == 0 {
        return Err(config_err("advice needs runs >= 1"));
    }
    let target = MixtureTarget::two_wells(a.dim, a.separation)?;
    let m = match a.m {
        Some(m) => m,
        None => sample_count(a.delta, target.p_star(), a.eps, SAMPLE_CONSTANT)? as usize,
    };
    let opts = AdviceOptions { cell: a.cell, margin: a.margin, checkpoints: a.checkpoints, hist_bins: a.hist_bins };
    let seeds = SeedTree::new(cfg.seed);
    let runs: Vec<(AdviceTrace, AdviceTrace)> = (0..a.runs as u64)
        .into_par_iter()
        .map(|run| -> Result<_> {
            let good = run_advice(&target, m, a.horizon, a.step, &mut seeds.chain(run, 0), InitMode::Advice, &opts)?;
            let bad =
                run_advice(&target, m, a.horizon, a.step, &mut seeds.chain(run, 1), InitMode::Adversarial(0), &opts)?;
            Ok((good, bad))
        })
        .collect::<Result<Vec<_>>>()?;

    let last = |t: &AdviceTrace| t.tv.last().copied().unwrap_or(f64::NAN);
    let successes = runs.iter().filter(|(g, _)| last(g) <= a.tv_advice).count();
    let fraction = successes as f64 / runs.len() as f64;
    let min_bad = runs.iter().map(|(_, b)| last(b)).fold(f64::INFINITY, f64::min);

    let mut trace = Trace::new("advice_traces", &["run", "init", "t", "tv", "chi2", "chain_tv"]);
    let mut per_run = Vec::new();
    for (k, (g, b)) in runs.iter().enumerate() {
        for (label, t) in [("advice", g), ("adversarial", b)] {
            for i in 0..t.times.len() {
                let chain = t.chain_tv.get(i).map_or(String::new(), |v| num(*v));
                trace.push([k.to_string(), label.to_string(), num(t.times[i]), num(t.tv[i]), num(t.chi2[i]), chain]);
            }
        }
        per_run.push(json!({
            "run": k,
            "tv_advice": last(g),
            "tv_adversarial": last(b),
            "imbalance": g.advice.imbalance,
            "counts": g.advice.counts,
        }));
    }
    let checks = vec![
        Check::new(
            "advice_mixes",
            fraction >= a.success_fraction,
            format!(
                "{successes}/{} runs reach TV <= {} (need fraction {})",
                runs.len(),
                a.tv_advice,
                a.success_fraction
            ),
        ),
        Check::new(
            "adversarial_stuck",
            min_bad >= a.tv_adversarial,
            format!("smallest adversarial TV {min_bad} vs {}", a.tv_adversarial),
        ),
    ];
    let results = json!({
        "m": m,
        "p_star": target.p_star(),
        "success_fraction": fraction,
        "min_adversarial_tv": min_bad,
        "runs": per_run,
    });
    Ok(Outcome { results, checks, traces: vec![trace] })
}
