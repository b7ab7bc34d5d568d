//! Functional-inequality suite on small hypercube Glauber chains: detailed balance, spectral
//! decay of chi^2, weak Poincare mixing bounds and the two-ball gadget.

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;
use spinglass_core::dynamics::glauber_matrix;
use spinglass_core::functional::{
    chi2_trajectory, generator_spectrum, mixing_bound, spectral_gap, weak_pi_probe, BoundMode, DiscreteMeasure, WeakPI,
};

use super::Outcome;
use crate::config::ExperimentConfig;
use crate::error::{config_err, Result};
use crate::measures::build_measure;
use crate::report::{num, Check, Trace};
use crate::seeds::SeedTree;

/// Per-chain tolerance on detailed balance `|pi_x P_xy - pi_y P_yx|`.
const BALANCE_TOL: f64 = 1e-14;

struct ChainResult {
    bits: usize,
    gap: f64,
    balance: f64,
    row_err: f64,
    envelope_ok: bool,
    tight_err: f64,
    bound_ok: bool,
    chi2: Vec<(f64, f64)>,
}

fn analyze(pi: &DiscreteMeasure, seeds: &SeedTree, k: u64, horizon: f64, grid: usize) -> Result<ChainResult> {
    let bits = pi.cube_bits().ok_or_else(|| config_err("functional suite needs hypercube measures"))?;
    let w = pi.weights();
    let p = glauber_matrix(pi)?;
    let size = w.len();
    let mut balance = 0.0f64;
    let mut row_err = 0.0f64;
    for x in 0..size {
        row_err = row_err.max((p.row(x).sum() - 1.0).abs());
        for y in 0..size {
            balance = balance.max((w[x] * p[(x, y)] - w[y] * p[(y, x)]).abs());
        }
    }
    let spec = generator_spectrum(pi)?;
    let gap = spec.eigenvalues.get(1).copied().unwrap_or(0.0);

    let mut rng = seeds.stream("nu0", k);
    let raw: Vec<f64> = w.iter().map(|wx| if *wx > 0.0 { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
    let nu0 = pi.reweighted(raw)?;
    let chi2 = chi2_trajectory(pi, &nu0, horizon, grid)?;
    let c0 = chi2[0].1;
    let envelope_ok = chi2.iter().all(|(t, c)| *c <= (-2.0 * gap * t).exp() * c0 * (1.0 + 1e-9) + 1e-15);

    // nu = pi (1 + s f_1) for the gap eigenfunction f_1 decays exactly like s^2 exp(-2 gap t).
    let f1 = &spec.eigenfunctions[1];
    let amp = f1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let s = 0.5 / amp;
    let mut tilted = vec![0.0; size];
    for (a, &x) in spec.support.iter().enumerate() {
        tilted[x] = w[x] * (1.0 + s * f1[a]);
    }
    let nu1 = pi.reweighted(tilted)?;
    let exact = chi2_trajectory(pi, &nu1, horizon, grid)?;
    let e0 = exact[0].1;
    let tight_err = exact.iter().fold(0.0f64, |acc, (t, c)| {
        let want = e0 * (-2.0 * gap * t).exp();
        acc.max((c - want).abs() / want.max(1e-300))
    });

    let eps = rng.random_range(0.0..0.1);
    let wpi = WeakPI::new(gap, eps)?;
    let bound_ok = chi2.iter().all(|(t, c)| mixing_bound(wpi, c0, *t, BoundMode::Chi2) >= *c * (1.0 - 1e-12));
    Ok(ChainResult { bits, gap, balance, row_err, envelope_ok, tight_err, bound_ok, chi2 })
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let f = cfg.functional_suite.clone().unwrap_or_default();
    if f.min_bits == 0 || f.min_bits > f.bits || f.bits > 12 {
        return Err(config_err("functional suite needs 1 <= min_bits <= bits <= 12"));
    }
    let seeds = SeedTree::new(cfg.seed);
    let span = f.bits - f.min_bits + 1;
    let mut measures = Vec::with_capacity(f.chains + 1);
    for k in 0..f.chains {
        let bits = f.min_bits + k % span;
        let mut rng = seeds.stream("chain-weights", k as u64);
        let w: Vec<f64> = (0..1usize << bits).map(|_| rng.random_range(0.05..1.0)).collect();
        measures.push(DiscreteMeasure::cube(bits, w)?);
    }
    if let Some(mc) = &f.measure {
        measures.push(build_measure(mc, &seeds)?);
    }
    let chains: Vec<ChainResult> = measures
        .par_iter()
        .enumerate()
        .map(|(k, pi)| analyze(pi, &seeds, k as u64, f.horizon, f.grid))
        .collect::<Result<Vec<_>>>()?;

    let gadget = DiscreteMeasure::two_ball_gadget(f.gadget_bits)?;
    let mut c_ball = f64::INFINITY;
    for upper in [false, true] {
        let w: Vec<f64> = gadget
            .weights()
            .iter()
            .enumerate()
            .map(|(s, v)| if ((s as u64).count_ones() as usize * 2 > f.gadget_bits) == upper { *v } else { 0.0 })
            .collect();
        c_ball = c_ball.min(spectral_gap(&gadget.reweighted(w)?)?);
    }
    let weak = weak_pi_probe(&gadget, WeakPI::new(c_ball, 0.25 + 1e-6)?, f.trials, &mut seeds.stream("probe", 0))?;
    let strong = weak_pi_probe(&gadget, WeakPI::new(c_ball, 0.0)?, f.trials, &mut seeds.stream("probe", 1))?;

    let balance = chains.iter().fold(0.0f64, |a, c| a.max(c.balance));
    let tight = chains.iter().fold(0.0f64, |a, c| a.max(c.tight_err));
    let checks = vec![
        Check::new("detailed_balance", balance <= BALANCE_TOL, format!("max |pi_x P_xy - pi_y P_yx| = {balance:e}")),
        Check::new(
            "chi2_envelope",
            chains.iter().all(|c| c.envelope_ok),
            "chi2_t <= exp(-2 gap t) chi2_0 on every chain",
        ),
        Check::new("chi2_envelope_tight", tight <= 1e-9, format!("max relative error on gap eigenfunction {tight:e}")),
        Check::new(
            "mixing_bound_dominates",
            chains.iter().all(|c| c.bound_ok),
            "weak Poincare chi2 bound dominates every trajectory",
        ),
        Check::new("gadget_weak_pi_unrefuted", !weak.is_refuted(), format!("(c, 1/4) with c = {c_ball}")),
        Check::new("gadget_pi_refuted", strong.is_refuted(), format!("(c, 0) with c = {c_ball}")),
    ];

    let mut summary = Trace::new(
        "functional_chains",
        &["chain", "bits", "gap", "detailed_balance", "row_sum_err", "chi2_0", "chi2_T"],
    );
    let mut decay = Trace::new("functional_chi2", &["chain", "t", "chi2", "envelope"]);
    for (k, c) in chains.iter().enumerate() {
        let c0 = c.chi2[0].1;
        summary.push([
            k.to_string(),
            c.bits.to_string(),
            num(c.gap),
            num(c.balance),
            num(c.row_err),
            num(c0),
            num(c.chi2.last().map_or(f64::NAN, |v| v.1)),
        ]);
        for (t, v) in &c.chi2 {
            decay.push([k.to_string(), num(*t), num(*v), num((-2.0 * c.gap * t).exp() * c0)]);
        }
    }
    let results = json!({
        "chains": chains.iter().map(|c| json!({
            "bits": c.bits, "gap": c.gap, "detailed_balance": c.balance, "row_sum_err": c.row_err,
            "envelope_ok": c.envelope_ok, "tight_err": c.tight_err, "bound_ok": c.bound_ok,
        })).collect::<Vec<_>>(),
        "gadget": {
            "bits": f.gadget_bits,
            "ball_gap": c_ball,
            "weak_pi_refuted": weak.is_refuted(),
            "pi_refuted": strong.is_refuted(),
        },
    });
    Ok(Outcome { results, checks, traces: vec![summary, decay] })
}
