//! Annealed Langevin replicas on shared disorder.

use rayon::prelude::*;
use serde_json::json;
use spinglass_core::dynamics::{run_annealed, AnnealSchedule, ChainDiagnostics};
use spinglass_core::{overlap, Hamiltonian, SphereState};

use super::{median, Outcome, WallClock};
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::report::{num, Check, Trace};
use crate::seeds::SeedTree;

struct RunResult {
    disorder_seed: u64,
    chains: Vec<(SphereState, ChainDiagnostics)>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = cfg.mixture()?;
    let a = cfg.anneal.clone().unwrap_or_default();
    if a.n == 0 || a.replicas == 0 || a.runs == 0 {
        return Err(config_err("anneal needs n, replicas and runs >= 1"));
    }
    let base = AnnealSchedule::with_defaults(a.n, a.beta_max, &m)?;
    let sched = AnnealSchedule::new(
        a.delta.unwrap_or(base.delta),
        a.stage_time.unwrap_or(base.stage_time),
        a.beta_max,
        a.step.unwrap_or(base.step_size),
    )?;
    let seeds = SeedTree::new(cfg.seed);
    let runs: Vec<RunResult> = (0..a.runs as u64)
        .into_par_iter()
        .map(|run| -> Result<RunResult> {
            let disorder_seed = seeds.disorder(run);
            let h = Hamiltonian::sample(&m, a.n, disorder_seed)?;
            let chains = (0..a.replicas as u64)
                .map(|r| Ok(run_annealed(&h, &sched, &mut seeds.chain(run, r), &mut WallClock::new())?))
                .collect::<Result<Vec<_>>>()?;
            Ok(RunResult { disorder_seed, chains })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut abs_overlaps = Vec::new();
    let mut blowups = 0;
    let mut per_run = Vec::new();
    let mut stages = Trace::new(
        "anneal_stages",
        &["run", "replica", "stage", "beta", "mean_energy_per_spin", "overlap_with_start", "max_renorm_drift"],
    );
    for (k, r) in runs.iter().enumerate() {
        let mut overlaps = Vec::new();
        for i in 0..r.chains.len() {
            for j in 0..i {
                let q = overlap(r.chains[i].0.coords(), r.chains[j].0.coords())?;
                overlaps.push(q);
                abs_overlaps.push(q.abs());
            }
        }
        let mut finals = Vec::new();
        let mut warn = false;
        for (rep, (_, d)) in r.chains.iter().enumerate() {
            blowups += d.blowups.len();
            warn |= d.sl_warning;
            let mut offset = 0;
            for (st, beta) in d.stage_betas.iter().enumerate() {
                let len = sched.steps_in_stage(st);
                let slice = &d.energy_per_spin[offset..offset + len];
                offset += len;
                let mean = if len > 0 { slice.iter().sum::<f64>() / len as f64 } else { f64::NAN };
                stages.push([
                    k.to_string(),
                    rep.to_string(),
                    st.to_string(),
                    num(*beta),
                    num(mean),
                    num(d.overlap_with_start[st]),
                    num(d.max_renorm_drift[st]),
                ]);
            }
            finals.push(d.energy_per_spin.last().copied().unwrap_or(f64::NAN));
        }
        per_run.push(json!({
            "run": k,
            "disorder_seed": r.disorder_seed,
            "overlaps": overlaps,
            "final_energy_per_spin": finals,
            "sl_warning": warn,
        }));
    }
    let mut energy = Trace::new("anneal_energy", &["step", "energy_per_spin"]);
    let thin = a.energy_thin.max(1);
    for (s, e) in runs[0].chains[0].1.energy_per_spin.iter().enumerate().step_by(thin) {
        energy.push([s.to_string(), num(*e)]);
    }

    let threshold = 5.0 / (a.n as f64).sqrt();
    let med = if abs_overlaps.is_empty() { f64::NAN } else { median(&abs_overlaps) };
    let mut checks = vec![Check::new("no_blowups", blowups == 0, format!("{blowups} integrator blow-ups"))];
    if a.replicas >= 2 {
        checks.push(Check::new(
            "replica_overlap",
            med <= threshold,
            format!("median |R| = {med} vs 5/sqrt(N) = {threshold}"),
        ));
    }
    let results = json!({
        "schedule": {
            "delta": sched.delta,
            "stage_time": sched.stage_time,
            "beta_max": sched.beta_max,
            "step": sched.step_size,
            "stages": sched.stages(),
            "total_steps": sched.total_steps(),
        },
        "median_abs_overlap": med,
        "overlap_threshold": threshold,
        "blowups": blowups,
        "runs": per_run,
    });
    Ok(Outcome { results, checks, traces: vec![stages, energy] })
}
