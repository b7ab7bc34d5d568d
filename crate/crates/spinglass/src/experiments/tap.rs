//! TAP fixed points in the planted model and the band geometry around them.

use rayon::prelude::*;
use serde_json::json;
use spinglass_core::classify;
use spinglass_core::tap::{
    band, default_init, e_hat_gradient, e_hat_hessian, eig2, find_tap_point, random_init, TapContext, TapParams,
    TapSolution,
};
use spinglass_core::SphereState;

use super::Outcome;
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::report::{num, Check, Trace};
use crate::seeds::SeedTree;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = cfg.mixture()?;
    let c = cfg.tap.clone().unwrap_or_default();
    if c.starts == 0 {
        return Err(config_err("tap needs starts >= 1"));
    }
    let seeds = SeedTree::new(cfg.seed);
    let x = SphereState::uniform(c.n, &mut seeds.stream("spike", 0));
    let ctx = TapContext::planted(&m, c.t, c.n, seeds.disorder(0), x, c.iota)?;

    let solutions: Vec<std::result::Result<TapSolution, String>> = (0..c.starts as u64)
        .into_par_iter()
        .map(|k| {
            let init = if k == 0 { default_init(&ctx) } else { random_init(&ctx, &mut seeds.chain(0, k)) };
            find_tap_point(&ctx, Some(&init), c.tol).map_err(|e| e.to_string())
        })
        .collect();

    let reference = solutions.iter().find_map(|s| s.as_ref().ok()).cloned();
    let sqrt_n = (c.n as f64).sqrt();
    let mut starts = Vec::new();
    let mut newton = Trace::new("tap_newton", &["start", "iteration", "residual"]);
    let mut max_dev = 0.0f64;
    for (k, s) in solutions.iter().enumerate() {
        match s {
            Ok(sol) => {
                let dev = reference.as_ref().map_or(0.0, |r| {
                    sol.m.iter().zip(&r.m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / sqrt_n
                });
                max_dev = max_dev.max(dev);
                for (i, res) in sol.trace.iter().enumerate() {
                    newton.push([k.to_string(), i.to_string(), num(*res)]);
                }
                starts.push(json!({
                    "start": k, "converged": true, "residual": sol.residual, "q_m": sol.q_m, "q_x": sol.q_x,
                    "iterations": sol.iterations, "exited_region": sol.exited_region, "deviation": dev,
                }));
            }
            Err(e) => starts.push(json!({"start": k, "converged": false, "error": e})),
        }
    }
    let converged = solutions.iter().filter(|s| s.is_ok()).count();

    let p = TapParams::at_q_star(&m, c.t, c.band_n)?;
    let reach = c.band_reach * c.band_n.powf(0.1);
    let cutoff = c.band_n.powf(-0.8);
    let mut band_trace = Trace::new("tap_band", &["a", "b", "r2", "v_norm2", "xi_ab_linear", "strict_rs_eps"]);
    let mut band_rs = true;
    let mut band_linear = true;
    let g = c.band_grid.max(1);
    for i in 0..g {
        for j in 0..g {
            let at = |k: usize| if g == 1 { 0.0 } else { -reach + 2.0 * reach * k as f64 / (g - 1) as f64 };
            let (a, b) = (at(i), at(j));
            let geo = band(&p, a, b)?;
            let eps = classify(&geo.xi_ab, 10_000)?.strict_rs_eps;
            band_rs &= eps > 0.0;
            band_linear &= geo.xi_ab_linear <= cutoff;
            band_trace.push([num(a), num(b), num(geo.r2), num(geo.v_norm2), num(geo.xi_ab_linear), num(eps)]);
        }
    }
    let grad = e_hat_gradient(&p, 0.0, 0.0)?;
    let hess = eig2(e_hat_hessian(&p, 0.0, 0.0)?);
    let grad_norm = grad[0].hypot(grad[1]);

    let checks = vec![
        Check::new("all_starts_converged", converged == c.starts, format!("{converged}/{} starts converged", c.starts)),
        Check::new(
            "unique_fixed_point",
            converged == c.starts && max_dev <= c.uniqueness_tol,
            format!("max |m_k - m_0|/sqrt(N) = {max_dev} vs {}", c.uniqueness_tol),
        ),
        Check::new("band_strict_rs", band_rs, "strict RS holds at every band grid point"),
        Check::new("band_linear_small", band_linear, format!("linear coefficient <= N^(-4/5) = {cutoff}")),
        Check::new("e_hat_stationary", grad_norm <= 1e-4, format!("|grad E_hat(0,0)| = {grad_norm}")),
        Check::new("e_hat_concave", hess[0] < 0.0 && hess[1] < 0.0, format!("Hessian eigenvalues {hess:?}")),
    ];
    let results = json!({
        "q_star": ctx.q_star(),
        "solution": reference.as_ref().map(|r| json!({
            "m": r.m, "residual": r.residual, "q_m": r.q_m, "q_x": r.q_x, "iterations": r.iterations,
        })),
        "starts": starts,
        "max_deviation": max_dev,
        "band": {"n": c.band_n, "reach": reach, "grid": g, "linear_cutoff": cutoff},
        "e_hat": {"gradient": grad, "hessian_eigenvalues": hess},
    });
    Ok(Outcome { results, checks, traces: vec![newton, band_trace] })
}
