//! Regime classification and inverse-temperature thresholds of a mixture.

use serde_json::json;
use spinglass_core::{classify, thresholds};

use super::Outcome;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{num, Check, Trace};

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let m = cfg.mixture()?;
    let grid = cfg.thresholds.clone().unwrap_or_default().grid;
    let t = thresholds(&m, grid)?;
    let r = classify(&m, grid)?;
    let ratio = t.beta_sl / t.beta_shatter;
    let results = json!({
        "beta_sl": t.beta_sl,
        "beta_shatter": t.beta_shatter,
        "beta_strict_rs": t.beta_strict_rs,
        "ratio_sl_shatter": ratio,
        "regime": {
            "sl": r.sl,
            "sl_margin": r.sl_margin,
            "nonshatter": r.nonshatter,
            "nonshatter_margin": r.nonshatter_margin,
            "strict_rs_eps": r.strict_rs_eps,
            "linear_part_excluded": r.linear_part_excluded,
        },
    });
    let slack = 1e-9;
    let mut checks = vec![
        Check::new(
            "implication_chain",
            !(r.sl && !r.nonshatter) && !(r.nonshatter && r.strict_rs_eps == 0.0),
            format!("sl={} nonshatter={} strict_rs_eps={}", r.sl, r.nonshatter, r.strict_rs_eps),
        ),
        Check::new(
            "threshold_order",
            t.beta_sl <= t.beta_shatter * (1.0 + slack) && t.beta_shatter <= t.beta_strict_rs * (1.0 + slack),
            format!("{} <= {} <= {}", t.beta_sl, t.beta_shatter, t.beta_strict_rs),
        ),
    ];
    let nonzero: Vec<usize> = (1..=m.degree()).filter(|p| m.gamma_sq(*p) > 0.0).collect();
    if nonzero.len() == 1 && nonzero[0] >= 3 {
        let floor = 0.5 * 1f64.exp().sqrt();
        checks.push(Check::new("pure_ratio_floor", ratio >= floor, format!("{ratio} >= {floor}")));
    }
    let mut trace = Trace::new("thresholds", &["quantity", "value"]);
    for (k, v) in [("beta_sl", t.beta_sl), ("beta_shatter", t.beta_shatter), ("beta_strict_rs", t.beta_strict_rs)] {
        trace.push([k.to_string(), num(v)]);
    }
    Ok(Outcome { results, checks, traces: vec![trace] })
}
