//! Random-matrix predictions for the partition function and the Gibbs covariance, checked
//! against Monte Carlo and Langevin sampling.

use rayon::prelude::*;
use serde_json::{json, Value};
use spinglass_core::dynamics::{default_step, langevin_moments};
use spinglass_core::rmt::{analyze_deg2, cov_prediction, logz_full_prediction, mc_partition};
use spinglass_core::{Hamiltonian, SphereState};

use super::{sym_opnorm, Outcome};
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::report::{num, Check, Trace};
use crate::seeds::SeedTree;

struct Draw {
    prediction: f64,
    log_z: f64,
    std_err: f64,
    within: bool,
    lambda_min: f64,
    lambda_max: f64,
    cov: Option<(f64, f64)>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = cfg.mixture()?;
    let r = cfg.rmt_check.clone().unwrap_or_default();
    if r.draws == 0 || r.n == 0 {
        return Err(config_err("rmt-check needs n >= 1 and draws >= 1"));
    }
    let pure2 = (1..=m.degree()).all(|p| p == 2 || m.gamma_sq(p) == 0.0) && m.gamma_sq(2) > 0.0;
    let slack = r.slack.unwrap_or(if pure2 { 1.0 } else { 1.5 });
    let seeds = SeedTree::new(cfg.seed);
    let step = default_step(&m, 1.0);

    let draws: Vec<Draw> = (0..r.draws as u64)
        .into_par_iter()
        .map(|d| -> Result<Draw> {
            let h = Hamiltonian::sample(&m, r.n, seeds.disorder(d))?;
            let prediction = if pure2 {
                analyze_deg2(&h)?.logz2_prediction
            } else {
                let lp = logz_full_prediction(&h)?;
                if lp.valid {
                    lp.value
                } else {
                    f64::NAN
                }
            };
            let mc = mc_partition(&h, r.mc_samples, &mut seeds.chain(d, 0))?;
            let eigs = h.hessian_origin().symmetric_eigenvalues();
            let lambda_min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
            let lambda_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let cov = if r.langevin_steps > 0 {
                let pred = cov_prediction(&h)?;
                let mut rng = seeds.chain(d, 1);
                let init = SphereState::uniform(r.n, &mut rng);
                let mom = langevin_moments(
                    &h,
                    1.0,
                    step,
                    init,
                    r.langevin_burn_in,
                    r.langevin_steps,
                    r.langevin_thin,
                    &mut rng,
                )?;
                let rel = sym_opnorm(&(&mom.covariance - &pred.matrix)) / sym_opnorm(&pred.matrix);
                Some((rel, pred.trace_over_n))
            } else {
                None
            };
            let within = (mc.log_z - prediction).abs() <= slack;
            Ok(Draw { prediction, log_z: mc.log_z, std_err: mc.std_err, within, lambda_min, lambda_max, cov })
        })
        .collect::<Result<Vec<_>>>()?;

    let hits = draws.iter().filter(|d| d.within).count();
    let fraction = hits as f64 / draws.len() as f64;
    let mut checks = vec![Check::new(
        "log_z_prediction",
        fraction >= r.required_fraction,
        format!("{hits}/{} draws within {slack} (need fraction {})", draws.len(), r.required_fraction),
    )];
    if r.langevin_steps > 0 {
        let worst_rel = draws.iter().filter_map(|d| d.cov).fold(0.0f64, |a, c| a.max(c.0));
        let worst_tr = draws.iter().filter_map(|d| d.cov).fold(0.0f64, |a, c| a.max((c.1 - 1.0).abs()));
        checks.push(Check::new(
            "covariance_prediction",
            worst_rel <= r.cov_rel_tol,
            format!("max relative operator error {worst_rel} vs {}", r.cov_rel_tol),
        ));
        checks.push(Check::new(
            "covariance_trace",
            worst_tr <= r.trace_tol,
            format!("max |tr/N - 1| = {worst_tr} vs {}", r.trace_tol),
        ));
    }

    let mut trace = Trace::new(
        "rmt_draws",
        &["draw", "lambda_min", "lambda_max", "prediction", "mc_log_z", "mc_std_err", "abs_diff"],
    );
    let mut per_draw = Vec::new();
    for (i, d) in draws.iter().enumerate() {
        trace.push([
            i.to_string(),
            num(d.lambda_min),
            num(d.lambda_max),
            num(d.prediction),
            num(d.log_z),
            num(d.std_err),
            num((d.log_z - d.prediction).abs()),
        ]);
        let cov = d.cov.map_or(Value::Null, |(rel, tr)| json!({"relative_opnorm_error": rel, "trace_over_n": tr}));
        per_draw.push(json!({
            "prediction": d.prediction,
            "mc_log_z": d.log_z,
            "mc_std_err": d.std_err,
            "within": d.within,
            "covariance": cov,
        }));
    }
    let results = json!({
        "pure_degree_two": pure2,
        "slack": slack,
        "fraction_within": fraction,
        "draws": per_draw,
    });
    Ok(Outcome { results, checks, traces: vec![trace] })
}
