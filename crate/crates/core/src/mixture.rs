//! Mixture functions `xi(q) = sum_p gamma_p^2 q^p + t q`, their derived scalars and the
//! temperature-regime classifiers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;

use crate::error::{domain, invalid, Error, Result};
use crate::optim::{bisect, grid_min};

/// Largest `q` at which `log(1 - q)` is evaluated; beyond it the value is `-inf`.
pub const LOG_CAP: f64 = 1.0 - 1e-12;

/// Default grid size for regime margins.
pub const DEFAULT_GRID: usize = 100_000;

const REFINE_TOL: f64 = 1e-10;

/// Which terms of the mixture take part in an evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    /// Everything, tilt included.
    Full,
    /// Drops `gamma_1^2` and the tilt (the `xi_{~1}` of the strict-RS conditions).
    NoLinear,
    /// Drops `gamma_2^2` only.
    NoQuadratic,
}

/// Coefficients `gamma_p^2` for `p = 1..=p*` plus a nonnegative tilt `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureFunction {
    // coeffs[k] holds gamma_{k+1}^2
    coeffs: Vec<f64>,
    tilt: f64,
}

impl MixtureFunction {
    /// Builds a mixture from `(gamma_1^2, gamma_2^2, ...)`. The list is padded so `p* >= 2`.
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        for (k, c) in coeffs.iter().enumerate() {
            if !c.is_finite() || *c < 0.0 {
                return Err(invalid(format!("gamma_{}^2 = {} must be finite and >= 0", k + 1, c)));
            }
        }
        if coeffs.len() < 2 {
            coeffs.resize(2, 0.0);
        }
        Ok(Self { coeffs, tilt: 0.0 })
    }

    /// Builds a mixture from `(p, gamma_p^2)` pairs; repeated degrees are summed.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let deg = pairs.iter().map(|&(p, _)| p).max().unwrap_or(2).max(2);
        let mut coeffs = vec![0.0; deg];
        for &(p, c) in pairs {
            if p == 0 {
                return Err(invalid("degree p = 0 is not allowed"));
            }
            coeffs[p - 1] += c;
        }
        Self::new(coeffs)
    }

    /// Pure p-spin mixture `gamma_p^2 q^p`.
    pub fn pure(p: usize, gamma_sq: f64) -> Result<Self> {
        Self::from_pairs(&[(p, gamma_sq)])
    }

    /// The all-zero mixture.
    pub fn zero() -> Self {
        Self { coeffs: vec![0.0, 0.0], tilt: 0.0 }
    }

    /// Returns a copy with tilt `t` (replacing any previous tilt).
    pub fn tilted(&self, t: f64) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(invalid(format!("tilt t = {t} must be finite and >= 0")));
        }
        Ok(Self { coeffs: self.coeffs.clone(), tilt: t })
    }

    /// Mixture of `beta * H`: every `gamma_p^2` is multiplied by `beta^2`. The tilt is kept.
    pub fn scaled(&self, beta: f64) -> Self {
        let b2 = beta * beta;
        Self { coeffs: self.coeffs.iter().map(|c| c * b2).collect(), tilt: self.tilt }
    }

    /// Copy with the terms excluded by `part` removed.
    pub fn restricted(&self, part: Part) -> Self {
        let mut out = self.clone();
        match part {
            Part::Full => {}
            Part::NoLinear => {
                out.coeffs[0] = 0.0;
                out.tilt = 0.0;
            }
            Part::NoQuadratic => out.coeffs[1] = 0.0,
        }
        out
    }

    pub fn tilt(&self) -> f64 {
        self.tilt
    }

    /// `(gamma_1^2, gamma_2^2, ...)`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `gamma_p^2`, zero beyond the top degree.
    pub fn gamma_sq(&self, p: usize) -> f64 {
        if p == 0 {
            0.0
        } else {
            self.coeffs.get(p - 1).copied().unwrap_or(0.0)
        }
    }

    /// Top degree `p*`.
    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// Variance of the degree-one Gaussian field: `gamma_1^2 + t`.
    pub fn linear_variance(&self) -> f64 {
        self.coeffs[0] + self.tilt
    }

    /// True when every coefficient and the tilt vanish.
    pub fn is_zero(&self) -> bool {
        self.tilt == 0.0 && self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// `d^order xi_t / dq^order` at `q` with no domain check.
    pub fn deriv(&self, q: f64, order: usize) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            let p = k + 1;
            if c == 0.0 || p < order {
                continue;
            }
            let mut falling = 1.0;
            for j in 0..order {
                falling *= (p - j) as f64;
            }
            acc += c * falling * q.powi((p - order) as i32);
        }
        match order {
            0 => acc + self.tilt * q,
            1 => acc + self.tilt,
            _ => acc,
        }
    }

    /// `xi_t(q)`.
    pub fn value(&self, q: f64) -> f64 {
        self.deriv(q, 0)
    }

    /// Checked evaluation of `d^order xi / dq^order` restricted to `part`.
    pub fn eval(&self, q: f64, order: usize, part: Part) -> Result<f64> {
        if !(q.abs() <= 1.0) {
            return Err(domain(format!("|q| = {} exceeds 1", q.abs())));
        }
        Ok(match part {
            Part::Full => self.deriv(q, order),
            _ => self.restricted(part).deriv(q, order),
        })
    }

    /// `theta(s) = xi(1) - xi(s) - (1-s) xi'(s)` (order 0) or `theta'(s) = -(1-s) xi''(s)`
    /// (order 1). The tilt cancels, so this is the same for `xi` and `xi_t`.
    pub fn theta(&self, s: f64, order: usize) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(domain(format!("theta needs s in [0,1], got {s}")));
        }
        self.theta_unchecked(s, order)
    }

    pub(crate) fn theta_unchecked(&self, s: f64, order: usize) -> Result<f64> {
        let base = self.restricted_tilt_free();
        match order {
            0 => Ok(base.value(1.0) - base.value(s) - (1.0 - s) * base.deriv(s, 1)),
            1 => Ok(-(1.0 - s) * base.deriv(s, 2)),
            2 => Ok(base.deriv(s, 2) - (1.0 - s) * base.deriv(s, 3)),
            _ => Err(invalid(format!("theta order {order} not supported"))),
        }
    }

    fn restricted_tilt_free(&self) -> Self {
        Self { coeffs: self.coeffs.clone(), tilt: 0.0 }
    }

    /// `gamma(q) = q xi_t'(q)` (order 0) and `gamma'(q) = xi_t'(q) + q xi_t''(q)` (order 1).
    pub fn gamma_q(&self, q: f64, order: usize) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(domain(format!("gamma(q) needs q in [0,1], got {q}")));
        }
        match order {
            0 => Ok(q * self.deriv(q, 1)),
            1 => Ok(self.deriv(q, 1) + q * self.deriv(q, 2)),
            _ => Err(invalid(format!("gamma order {order} not supported"))),
        }
    }

    /// Unique `q` in `[0,1)` with `xi_t'(q) = q/(1-q)`, where the tilt of `self` is replaced
    /// by `t`. Requires (SL) for the untilted mixture.
    pub fn q_star(&self, t: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(invalid("q_star tolerance must be positive"));
        }
        let report = classify(self, 10_000)?;
        if !report.sl {
            return Err(Error::Regime(format!("q_star needs (SL); margin is {:.3e}", report.sl_margin)));
        }
        let m = self.tilted(t)?;
        let g = |q: f64| m.deriv(q, 1) * (1.0 - q) - q;
        if g(0.0) <= 0.0 {
            return Ok(0.0);
        }
        let q = bisect(g, 0.0, 1.0, |q, _| (m.deriv(q, 1) - q / (1.0 - q)).abs() <= tol);
        Ok(q)
    }
}

/// Regime classification of a mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeReport {
    /// `inf_q 1/(1-q)^2 - xi''(q) > 0`.
    pub sl: bool,
    pub sl_margin: f64,
    /// `xi'(q) < q/(1-q)` on `(0,1)`; the margin is `inf_q 1/(1-q) - xi'(q)/q`.
    pub nonshatter: bool,
    pub nonshatter_margin: f64,
    /// Largest `eps` with `(xi(q)+q+log(1-q))/q^2 <= -eps/2` and `xi''(0) <= 1-eps`, or 0.
    pub strict_rs_eps: f64,
    /// Set when a linear term or tilt was present and dropped before classifying.
    pub linear_part_excluded: bool,
}

/// `log(1-q)` with the cap described at [`LOG_CAP`].
pub fn log1m(q: f64) -> f64 {
    if q > LOG_CAP {
        f64::NEG_INFINITY
    } else {
        (-q).ln_1p()
    }
}

/// `(q + log(1-q)) / q^2`, by series for small `q` to avoid cancellation.
fn log_remainder(q: f64) -> f64 {
    if q.abs() < 1e-2 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for k in 2..40 {
            acc -= pow / k as f64;
            pow *= q;
        }
        acc
    } else {
        (q + log1m(q)) / (q * q)
    }
}

/// Classifies `xi_{~1}` of `m` against (SL), non-shattering and eps-strict RS.
pub fn classify(m: &MixtureFunction, grid: usize) -> Result<RegimeReport> {
    if grid < 1000 {
        return Err(invalid(format!("classify grid must be >= 1000, got {grid}")));
    }
    let xi = m.restricted(Part::NoLinear);
    let hi = 1.0 - 1.0 / grid as f64;

    let (_, sl_margin) = grid_min(|q| 1.0 / ((1.0 - q) * (1.0 - q)) - xi.deriv(q, 2), 0.0, hi, grid, REFINE_TOL);

    let xi2_0 = xi.deriv(0.0, 2);
    let ns = |q: f64| {
        if q == 0.0 {
            1.0 - xi2_0
        } else {
            1.0 / (1.0 - q) - xi.deriv(q, 1) / q
        }
    };
    let (_, nonshatter_margin) = grid_min(ns, 0.0, hi, grid, REFINE_TOL);

    let phi = |q: f64| {
        if q == 0.0 {
            0.5 * (xi2_0 - 1.0)
        } else {
            xi.value(q) / (q * q) + log_remainder(q)
        }
    };
    let (_, neg_phi_min) = grid_min(|q| -phi(q), 0.0, hi, grid, REFINE_TOL);
    let eps = (2.0 * neg_phi_min).min(1.0 - xi2_0);
    let strict_rs_eps = if eps > 0.0 { eps } else { 0.0 };

    Ok(RegimeReport {
        sl: sl_margin > 0.0,
        sl_margin,
        nonshatter: nonshatter_margin > 0.0,
        nonshatter_margin,
        strict_rs_eps,
        linear_part_excluded: m.tilt > 0.0 || m.coeffs[0] > 0.0,
    })
}

/// Inverse-temperature thresholds of the family `beta^2 * xi_{~1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds {
    pub beta_sl: f64,
    pub beta_shatter: f64,
    pub beta_strict_rs: f64,
}

/// Thresholds of `beta -> beta^2 xi_{~1}` for the three regime conditions, by grid search
/// refined with golden section.
pub fn thresholds(m: &MixtureFunction, grid: usize) -> Result<Thresholds> {
    if grid < 1000 {
        return Err(invalid(format!("threshold grid must be >= 1000, got {grid}")));
    }
    let xi = m.restricted(Part::NoLinear);
    if xi.is_zero() {
        return Err(invalid("thresholds of the zero mixture are infinite"));
    }
    let hi = 1.0 - 1.0 / grid as f64;
    // beta^2 < 1 / sup (1-q)^2 xi''(q)
    let (_, neg_sl) = grid_min(|q| -(1.0 - q) * (1.0 - q) * xi.deriv(q, 2), 0.0, hi, grid, 1e-13);
    // beta^2 < 1 / sup (1-q) xi'(q) / q
    let xi2_0 = xi.deriv(0.0, 2);
    let (_, neg_sh) =
        grid_min(|q| if q == 0.0 { -xi2_0 } else { -(1.0 - q) * xi.deriv(q, 1) / q }, 0.0, hi, grid, 1e-13);
    // beta^2 < inf (-q - log(1-q)) / xi(q), and beta^2 xi''(0) < 1
    let (_, rs) = grid_min(
        |q| {
            if q == 0.0 {
                if xi2_0 > 0.0 {
                    1.0 / xi2_0
                } else {
                    f64::INFINITY
                }
            } else {
                let v = xi.value(q);
                if v > 0.0 {
                    -log_remainder(q) * q * q / v
                } else {
                    f64::INFINITY
                }
            }
        },
        0.0,
        hi,
        grid,
        1e-13,
    );
    Ok(Thresholds { beta_sl: (1.0 / -neg_sl).sqrt(), beta_shatter: (1.0 / -neg_sh).sqrt(), beta_strict_rs: rs.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_values() {
        let m = MixtureFunction::pure(2, 1.0).unwrap();
        assert_eq!(m.eval(0.5, 0, Part::Full).unwrap(), 0.25);
        assert_eq!(m.eval(0.0, 2, Part::Full).unwrap(), 2.0);
        let m3 = MixtureFunction::pure(3, 1.0).unwrap();
        assert_eq!(m3.eval(1.0, 1, Part::Full).unwrap(), 3.0);
        assert!(m.eval(1.5, 0, Part::Full).is_err());
    }

    #[test]
    fn theta_and_gamma() {
        let m = MixtureFunction::pure(2, 1.0).unwrap();
        assert!((m.theta(0.5, 0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(m.theta(1.0, 0).unwrap(), 0.0);
        let m3 = MixtureFunction::pure(3, 1.0).unwrap();
        assert_eq!(m3.theta(0.0, 0).unwrap(), 1.0);
        assert_eq!(m.gamma_q(0.5, 0).unwrap(), 0.5);
        let lin = MixtureFunction::zero().tilted(1.0).unwrap();
        assert_eq!(lin.gamma_q(0.3, 0).unwrap(), 0.3);
        assert_eq!(m.gamma_q(0.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn tilt_shifts_first_derivative_only() {
        let m = MixtureFunction::new(vec![0.0, 0.3, 0.1]).unwrap();
        let t = m.tilted(0.7).unwrap();
        assert_eq!(m.tilted(0.0).unwrap(), m);
        assert!((t.deriv(0.4, 1) - m.deriv(0.4, 1) - 0.7).abs() < 1e-15);
        assert_eq!(t.deriv(0.4, 2), m.deriv(0.4, 2));
        assert_eq!(t.eval(0.4, 0, Part::NoLinear).unwrap(), m.eval(0.4, 0, Part::NoLinear).unwrap());
    }

    #[test]
    fn q_star_examples() {
        let zero = MixtureFunction::zero();
        assert!((zero.q_star(1.0, 1e-12).unwrap() - 0.5).abs() < 1e-10);
        let m = MixtureFunction::pure(2, 0.3).unwrap();
        assert_eq!(m.q_star(0.0, 1e-12).unwrap(), 0.0);
        // root of 0.6 q^2 + 1.4 q - 1
        let oracle = (-1.4 + (1.96f64 + 2.4).sqrt()) / 1.2;
        let q = m.q_star(1.0, 1e-13).unwrap();
        assert!((q - oracle).abs() < 1e-10, "{q} vs {oracle}");
        assert!((q - 0.57338).abs() < 1e-5);
    }

    #[test]
    fn q_star_refuses_outside_sl() {
        let m = MixtureFunction::pure(2, 0.6).unwrap();
        assert!(matches!(m.q_star(1.0, 1e-9), Err(Error::Regime(_))));
    }

    #[test]
    fn classify_quadratic() {
        let r = classify(&MixtureFunction::pure(2, 0.4).unwrap(), 10_000).unwrap();
        assert!(r.sl && r.nonshatter);
        assert!((r.sl_margin - 0.2).abs() < 1e-9);
        // eps limited by xi''(0) <= 1 - eps
        assert!((r.strict_rs_eps - 0.2).abs() < 1e-9, "{r:?}");
        let tilted = MixtureFunction::pure(2, 0.4).unwrap().tilted(5.0).unwrap();
        let rt = classify(&tilted, 10_000).unwrap();
        assert!(rt.linear_part_excluded);
        assert_eq!(rt.strict_rs_eps, r.strict_rs_eps);
    }

    #[test]
    fn pure_three_spin_thresholds() {
        let th = thresholds(&MixtureFunction::pure(3, 1.0).unwrap(), DEFAULT_GRID).unwrap();
        assert!((th.beta_sl - (9.0f64 / 8.0).sqrt()).abs() < 1e-8);
        assert!((th.beta_shatter - (4.0f64 / 3.0).sqrt()).abs() < 1e-8);
        assert!(th.beta_sl < th.beta_shatter && th.beta_shatter < th.beta_strict_rs);
    }
}
