//! TAP free energy of planted models, its critical points, the law of the Hamiltonian
//! conditioned on a TAP critical point, codimension-2 band geometry and the band energy `E_hat`.
//!
//! Conventions: `xi_t` is the mixture carried by the planted Hamiltonian, `q_m = R(m,m)`,
//! `q_x = R(m,x)`, `gamma(q) = q xi_t'(q)` and `kappa = xi_t''(q_m) / gamma'(q_m)`. Band
//! offsets are handled in scaled form `alpha = a / sqrt(N)`, `beta = b / sqrt(N)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, domain, invalid, Error, Result};
use crate::hamiltonian::{dot, overlap, Frame, Hamiltonian, SphereState};
use crate::mixture::MixtureFunction;

/// Finite-difference step for `E_hat` derivatives, in the scaled variables.
pub const FD_STEP: f64 = 1e-4;

/// Maximum Newton iterations in [`find_tap_point`].
pub const MAX_NEWTON_ITERS: usize = 200;

/// A planted Hamiltonian, its spike, `q_*` and the optional half-width of the region
/// `S_iota = { m : |q_m - q_*| < iota, |q_x - q_*| < iota }`.
#[derive(Clone, Debug)]
pub struct TapContext {
    h: Hamiltonian,
    x: SphereState,
    q_star: f64,
    iota: Option<f64>,
}

impl TapContext {
    pub fn new(h: Hamiltonian, x: SphereState, q_star: f64, iota: Option<f64>) -> Result<Self> {
        check_dim(h.dim(), x.dim())?;
        if !(0.0..1.0).contains(&q_star) {
            return Err(invalid(format!("q_* = {q_star} must lie in [0, 1)")));
        }
        if let Some(i) = iota {
            if !(i > 0.0) {
                return Err(invalid("iota must be positive"));
            }
        }
        Ok(Self { h, x, q_star, iota })
    }

    /// Samples the planted model at tilt `t`: disorder with mixture `xi_t`, spike
    /// `N xi_t(R(x, sigma))`, and `q_* = q_*(t)` of `base`.
    pub fn planted(
        base: &MixtureFunction,
        t: f64,
        n: usize,
        seed: u64,
        x: SphereState,
        iota: Option<f64>,
    ) -> Result<Self> {
        let xi_t = base.tilted(t)?;
        let q_star = base.q_star(t, 1e-13)?;
        let h = Hamiltonian::sample(&xi_t, n, seed)?.plant(&x, &xi_t)?;
        Self::new(h, x, q_star, iota)
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.h
    }

    pub fn x(&self) -> &SphereState {
        &self.x
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    pub fn iota(&self) -> Option<f64> {
        self.iota
    }

    /// `xi_t`.
    pub fn xi_t(&self) -> &MixtureFunction {
        self.h.mixture()
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// `(q_m, q_x)`.
    pub fn overlaps(&self, m: &[f64]) -> Result<(f64, f64)> {
        Ok((overlap(m, m)?, overlap(m, self.x.coords())?))
    }

    /// Whether `m` lies in `S_iota` (always true without a region).
    pub fn in_region(&self, m: &[f64]) -> Result<bool> {
        let (qm, qx) = self.overlaps(m)?;
        Ok(match self.iota {
            Some(i) => (qm - self.q_star).abs() < i && (qx - self.q_star).abs() < i,
            None => true,
        })
    }

    /// Scalar parameters at `m`.
    pub fn params(&self, m: &[f64]) -> Result<TapParams> {
        let (qm, qx) = self.overlaps(m)?;
        TapParams::new(self.xi_t().clone(), qm, qx, self.dim() as f64)
    }
}

fn tap_shift(xi: &MixtureFunction, qm: f64) -> Result<f64> {
    // theta'(q_m) - 1/(1 - q_m)
    Ok(xi.theta_unchecked(qm, 1)? - 1.0 / (1.0 - qm))
}

fn check_qm(qm: f64) -> Result<()> {
    if !(qm < 1.0) {
        return Err(domain(format!("R(m,m) = {qm} must be < 1")));
    }
    Ok(())
}

/// `F_TAP(m) = H(m) + (N/2) theta(q_m) + (N/2) log(1 - q_m)`.
pub fn f_tap(ctx: &TapContext, m: &[f64]) -> Result<f64> {
    let qm = overlap(m, m)?;
    check_dim(ctx.dim(), m.len())?;
    check_qm(qm)?;
    let n = ctx.dim() as f64;
    Ok(ctx.h.energy_unchecked(m) + 0.5 * n * ctx.xi_t().theta_unchecked(qm, 0)? + 0.5 * n * (-qm).ln_1p())
}

/// `grad F_TAP(m) = grad H(m) + m (theta'(q_m) - 1/(1 - q_m))`.
pub fn f_tap_gradient(ctx: &TapContext, m: &[f64]) -> Result<Vec<f64>> {
    check_dim(ctx.dim(), m.len())?;
    let qm = overlap(m, m)?;
    check_qm(qm)?;
    let mut g = ctx.h.gradient(m, Frame::Euclidean)?;
    let c = tap_shift(ctx.xi_t(), qm)?;
    g.iter_mut().zip(m).for_each(|(gi, mi)| *gi += c * mi);
    Ok(g)
}

/// Hessian of `F_TAP`:
/// `grad^2 H(m) + c(q_m) I + (2/N) c'(q_m) m m^T` with `c = theta' - 1/(1-q)`.
pub fn f_tap_hessian(ctx: &TapContext, m: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(ctx.dim(), m.len())?;
    let qm = overlap(m, m)?;
    check_qm(qm)?;
    let n = ctx.dim();
    let xi = ctx.xi_t();
    let c = tap_shift(xi, qm)?;
    let dc = xi.theta_unchecked(qm, 2)? - 1.0 / ((1.0 - qm) * (1.0 - qm));
    let mut hess = ctx.h.hessian(m)?;
    for i in 0..n {
        hess[(i, i)] += c;
        for j in 0..n {
            hess[(i, j)] += 2.0 * dc * m[i] * m[j] / n as f64;
        }
    }
    Ok(hess)
}

/// Result of [`find_tap_point`].
#[derive(Clone, Debug, PartialEq)]
pub struct TapSolution {
    pub m: Vec<f64>,
    /// `|grad F_TAP(m)|`.
    pub residual: f64,
    pub q_m: f64,
    pub q_x: f64,
    pub iterations: usize,
    /// Whether some iterate left `S_iota` and was projected back.
    pub exited_region: bool,
    /// Residual after every iteration.
    pub trace: Vec<f64>,
}

/// Default start: overlaps `q_m = q_x = q_*`, using the direction of `grad H(q_* x)` orthogonal
/// to `x` for the transverse part (falls back to `q_* x` when that vanishes).
pub fn default_init(ctx: &TapContext) -> Vec<f64> {
    let q = ctx.q_star;
    let x = ctx.x.coords();
    let base: Vec<f64> = x.iter().map(|v| q * v).collect();
    let mut dir = ctx.h.gradient(&base, Frame::Euclidean).unwrap_or_else(|_| vec![0.0; x.len()]);
    transverse_fill(&base, x, &mut dir, q - q * q)
}

/// Random start with `q_m = q_x = q_*` and a uniformly random transverse direction.
pub fn random_init<R: Rng + ?Sized>(ctx: &TapContext, rng: &mut R) -> Vec<f64> {
    let q = ctx.q_star;
    let x = ctx.x.coords();
    let base: Vec<f64> = x.iter().map(|v| q * v).collect();
    let mut dir: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    transverse_fill(&base, x, &mut dir, q - q * q)
}

fn transverse_fill(base: &[f64], x: &[f64], dir: &mut [f64], w2: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let c = dot(dir, x) / n;
    dir.iter_mut().zip(x).for_each(|(d, xi)| *d -= c * xi);
    let norm2 = dot(dir, dir) / n;
    if !(norm2 > 0.0) || !(w2 > 0.0) {
        return base.to_vec();
    }
    let s = (w2 / norm2).sqrt();
    base.iter().zip(dir.iter()).map(|(b, d)| b + s * d).collect()
}

/// Moves `m` back into `S_iota` by clipping `q_x` along `x`, then `q_m` by rescaling the part of
/// `m` orthogonal to `x`. Returns whether anything changed.
fn project_region(m: &mut [f64], x: &[f64], q_star: f64, iota: f64) -> bool {
    let n = x.len() as f64;
    let margin = 1e-9 * iota;
    let (lo, hi) = (q_star - iota + margin, q_star + iota - margin);
    let s = dot(m, x) / n;
    let mut w: Vec<f64> = m.iter().zip(x).map(|(mi, xi)| mi - s * xi).collect();
    let w2 = dot(&w, &w) / n;
    let qm = s * s + w2;
    let s_new = s.clamp(lo, hi);
    let qm_new = qm.clamp(lo, hi);
    if s_new == s && qm_new == qm {
        return false;
    }
    let w2_new = (qm_new - s_new * s_new).max(0.0);
    if w2 > 0.0 {
        let scale = (w2_new / w2).sqrt();
        w.iter_mut().for_each(|v| *v *= scale);
    }
    for i in 0..m.len() {
        m[i] = s_new * x[i] + w[i];
    }
    true
}

/// Damped Newton iteration for a critical point of `F_TAP`, projected into `S_iota` when a
/// region is set. Stops once `|grad F_TAP| <= tol sqrt(N)`.
pub fn find_tap_point(ctx: &TapContext, init: Option<&[f64]>, tol: f64) -> Result<TapSolution> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let n = ctx.dim();
    let mut m = match init {
        Some(v) => {
            check_dim(n, v.len())?;
            v.to_vec()
        }
        None => default_init(ctx),
    };
    let mut exited = false;
    if let Some(iota) = ctx.iota {
        exited |= project_region(&mut m, ctx.x.coords(), ctx.q_star, iota);
    }
    let target = tol * (n as f64).sqrt();
    let mut g = f_tap_gradient(ctx, &m)?;
    let mut res = dot(&g, &g).sqrt();
    let mut trace = Vec::new();
    for it in 1..=MAX_NEWTON_ITERS {
        if res <= target {
            let (q_m, q_x) = ctx.overlaps(&m)?;
            return Ok(TapSolution { m, residual: res, q_m, q_x, iterations: it - 1, exited_region: exited, trace });
        }
        let hess = f_tap_hessian(ctx, &m)?;
        let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
        let dir: Vec<f64> = match hess.lu().solve(&rhs) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d.iter().copied().collect(),
            _ => rhs.iter().copied().collect(),
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand: Vec<f64> = m.iter().zip(&dir).map(|(a, d)| a + lambda * d).collect();
            let mut projected = false;
            if let Some(iota) = ctx.iota {
                projected = project_region(&mut cand, ctx.x.coords(), ctx.q_star, iota);
            }
            if let Ok(gc) = f_tap_gradient(ctx, &cand) {
                let rc = dot(&gc, &gc).sqrt();
                if rc < res {
                    m = cand;
                    g = gc;
                    res = rc;
                    exited |= projected;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        trace.push(res);
        if !accepted {
            break;
        }
    }
    if res <= target {
        let (q_m, q_x) = ctx.overlaps(&m)?;
        let iterations = trace.len();
        return Ok(TapSolution { m, residual: res, q_m, q_x, iterations, exited_region: exited, trace });
    }
    Err(Error::NoConvergence(format!(
        "TAP residual {res:.3e} above {target:.3e} after {} iterations; trace tail {:?}",
        trace.len(),
        &trace[trace.len().saturating_sub(5)..]
    )))
}

fn check_open_unit(name: &str, q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("{name} = {q} must lie in (0, 1)")));
    }
    Ok(())
}

/// Scalar quantities of the conditional law shared by every point.
struct LawScalars {
    xi: MixtureFunction,
    qm: f64,
    qx: f64,
    d1m: f64,
    kappa: f64,
    shift: f64,
    ratio: f64,
}

impl LawScalars {
    fn new(xi: &MixtureFunction, qm: f64, qx: f64) -> Result<Self> {
        check_open_unit("q_m", qm)?;
        check_open_unit("q_x", qx)?;
        let d1m = xi.deriv(qm, 1);
        let gp = xi.gamma_q(qm, 1)?;
        if d1m == 0.0 || gp == 0.0 {
            return Err(Error::Singular("xi_t'(q_m) or gamma'(q_m) vanishes".into()));
        }
        let kappa = xi.deriv(qm, 2) / gp;
        Ok(Self { xi: xi.clone(), qm, qx, d1m, kappa, shift: tap_shift(xi, qm)?, ratio: xi.deriv(qm, 2) / (gp * d1m) })
    }

    fn gamma(&self, q: f64) -> f64 {
        q * self.xi.deriv(q, 1)
    }

    /// `Cov(H(s), H(s')) / N` from the overlaps `R(s,s')`, `R(m,s)`, `R(m,s')`.
    fn cov(&self, r: f64, rms: f64, rms2: f64) -> f64 {
        self.xi.value(r) - r * self.xi.deriv(rms, 1) * self.xi.deriv(rms2, 1) / self.d1m
            + self.ratio * self.gamma(rms) * self.gamma(rms2)
    }

    /// `E H(s) / N` from the overlaps `R(x,s)`, `R(m,s)`.
    fn mean(&self, rxs: f64, rms: f64) -> f64 {
        let f = self.xi.deriv(rms, 1) / self.d1m;
        let x_v = f * (rxs - self.kappa * self.qx * rms);
        let m_v = f * rms * (1.0 - self.kappa * self.qm);
        self.xi.value(rxs) - x_v * self.xi.deriv(self.qx, 1) - m_v * self.shift
    }
}

/// `v(sigma) = (xi_t'(R(m,sigma)) / xi_t'(q_m)) [I - kappa m m^T / N] sigma`.
pub fn v_sigma(ctx: &TapContext, m: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    let (qm, qx) = ctx.overlaps(m)?;
    check_dim(ctx.dim(), sigma.len())?;
    let s = LawScalars::new(ctx.xi_t(), qm, qx)?;
    let rms = overlap(m, sigma)?;
    let f = s.xi.deriv(rms, 1) / s.d1m;
    Ok(sigma.iter().zip(m).map(|(si, mi)| f * (si - s.kappa * mi * rms)).collect())
}

/// `E H_TAP(sigma) = N xi_t(R(x,sigma)) - <x, v(sigma)> xi_t'(q_x)
/// - <m, v(sigma)> (theta'(q_m) - 1/(1-q_m))`, computed from the vector `v(sigma)`.
pub fn conditional_mean(ctx: &TapContext, m: &[f64], sigma: &[f64]) -> Result<f64> {
    let (qm, qx) = ctx.overlaps(m)?;
    let s = LawScalars::new(ctx.xi_t(), qm, qx)?;
    let v = v_sigma(ctx, m, sigma)?;
    let n = ctx.dim() as f64;
    let x = ctx.x.coords();
    Ok(n * s.xi.value(overlap(x, sigma)?) - dot(x, &v) * s.xi.deriv(qx, 1) - dot(m, &v) * s.shift)
}

/// `Cov(H_TAP(sigma), H_TAP(sigma')) / N`.
pub fn conditional_cov(ctx: &TapContext, m: &[f64], sigma: &[f64], sigma2: &[f64]) -> Result<f64> {
    let (qm, qx) = ctx.overlaps(m)?;
    let s = LawScalars::new(ctx.xi_t(), qm, qx)?;
    Ok(s.cov(overlap(sigma, sigma2)?, overlap(m, sigma)?, overlap(m, sigma2)?))
}

/// Means and the `Cov / N` matrix of `H_TAP` at `points`.
pub fn conditional_law(ctx: &TapContext, m: &[f64], points: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = points.len();
    let mut means = Vec::with_capacity(k);
    for p in points {
        means.push(conditional_mean(ctx, m, p)?);
    }
    let mut cov = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let c = conditional_cov(ctx, m, &points[i], &points[j])?;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    Ok((means, cov))
}

/// Exact conditional law from dense Gaussian conditioning.
#[derive(Clone, Debug)]
pub struct OracleLaw {
    pub means: Vec<f64>,
    /// `Cov / N`.
    pub cov: DMatrix<f64>,
    /// Set when the gradient block was singular and a pseudo-inverse was used.
    pub used_pseudo_inverse: bool,
}

/// Builds the joint Gaussian of `(H~(sigma_1..k), grad H~(m))` with `Cov(H~(u), H~(w)) =
/// N xi_t(R(u,w))`, conditions on `grad H~(m) = -x xi_t'(q_x) - m (theta'(q_m) - 1/(1-q_m))`
/// and adds the spike mean `N xi_t(R(x, sigma))`.
pub fn gaussian_conditioning_oracle(ctx: &TapContext, m: &[f64], points: &[Vec<f64>]) -> Result<OracleLaw> {
    let n = ctx.dim();
    let k = points.len();
    if n > 8 || k > 10 {
        return Err(invalid("the dense oracle supports N <= 8 and at most 10 points"));
    }
    check_dim(n, m.len())?;
    for p in points {
        check_dim(n, p.len())?;
    }
    let xi = ctx.xi_t();
    let nf = n as f64;
    let x = ctx.x.coords();
    let (qm, qx) = ctx.overlaps(m)?;
    check_open_unit("q_m", qm)?;
    // Cov(H(u), H(w)) = N xi(<u,w>/N)
    let k_ss = DMatrix::from_fn(k, k, |i, j| nf * xi.value(dot(&points[i], &points[j]) / nf));
    // Cov(H(u), d_j H(m)) = xi'(R(m,u)) u_j
    let k_sg = DMatrix::from_fn(k, n, |i, j| xi.deriv(dot(m, &points[i]) / nf, 1) * points[i][j]);
    // Cov(d_i H(m), d_j H(m)) = xi'(q_m) delta_ij + xi''(q_m) m_i m_j / N
    let k_gg = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { xi.deriv(qm, 1) } else { 0.0 };
        d + xi.deriv(qm, 2) * m[i] * m[j] / nf
    });
    let shift = tap_shift(xi, qm)?;
    let g_star = DVector::from_fn(n, |i, _| -x[i] * xi.deriv(qx, 1) - m[i] * shift);
    let (solve_t, used_pseudo_inverse) = match k_gg.clone().cholesky() {
        Some(ch) => (ch.solve(&k_sg.transpose()), false),
        None => {
            let pinv = k_gg.pseudo_inverse(1e-12).map_err(|e| Error::Singular(format!("gradient block: {e}")))?;
            (pinv * k_sg.transpose(), true)
        }
    };
    // solve_t = K_gg^{-1} K_gs
    let weights = solve_t.transpose();
    let cond_mean = &weights * &g_star;
    let cond_cov = &k_ss - &weights * k_sg.transpose();
    let means = (0..k).map(|i| cond_mean[i] + nf * xi.value(dot(x, &points[i]) / nf)).collect();
    Ok(OracleLaw { means, cov: cond_cov / nf, used_pseudo_inverse })
}

/// Scalars that determine the band geometry and `E_hat`.
#[derive(Clone, Debug, PartialEq)]
pub struct TapParams {
    pub xi_t: MixtureFunction,
    pub q_m: f64,
    pub q_x: f64,
    /// Dimension `N` (only enters through `a / sqrt(N)`).
    pub n: f64,
}

impl TapParams {
    pub fn new(xi_t: MixtureFunction, q_m: f64, q_x: f64, n: f64) -> Result<Self> {
        check_open_unit("q_m", q_m)?;
        check_open_unit("q_x", q_x)?;
        if !(n >= 1.0) {
            return Err(invalid("N must be >= 1"));
        }
        Ok(Self { xi_t, q_m, q_x, n })
    }

    /// `q_m = q_x = q_*(t)` for `base` tilted by `t`.
    pub fn at_q_star(base: &MixtureFunction, t: f64, n: f64) -> Result<Self> {
        let q = base.q_star(t, 1e-14)?;
        Self::new(base.tilted(t)?, q, q, n)
    }
}

/// Geometry of the slice `S(a,b)` and its mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct BandGeometry {
    pub a: f64,
    pub b: f64,
    /// `sqrt(N) v(a,b) = coef_m m + coef_x x`.
    pub coef_m: f64,
    pub coef_x: f64,
    /// `|v(a,b)|^2`.
    pub v_norm2: f64,
    /// `r_{a,b}^2`.
    pub r2: f64,
    /// Slice mixture with its linear coefficient clipped at zero.
    pub xi_ab: MixtureFunction,
    /// `xi_{a,b}'(0)` before clipping.
    pub xi_ab_linear: f64,
    /// `V(a,b)`.
    pub v_ab: f64,
}

fn binomial(p: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (p - j) as f64 / (j + 1) as f64)
}

fn scaled(p: &TapParams, a: f64, b: f64) -> (f64, f64) {
    let s = p.n.sqrt();
    (a / s, b / s)
}

/// Center coefficients and `|v|^2` in scaled offsets.
fn center(p: &TapParams, al: f64, be: f64) -> Result<(f64, f64, f64)> {
    let (qm, qx) = (p.q_m, p.q_x);
    let d = qm - qx * qx;
    if !(d > 0.0) {
        return Err(domain(format!("q_m - q_x^2 = {d} must be positive")));
    }
    let coef_m = 1.0 + (al * qm - be * qx * qx) / d;
    let coef_x = qm * qx * (be - al) / d;
    let v2 = coef_m * coef_m * qm + 2.0 * coef_m * coef_x * qx + coef_x * coef_x;
    Ok((coef_m, coef_x, v2))
}

/// `r_{a,b}^2 = 1 - q_m (1+alpha)^2 - q_m q_x^2 / (q_m - q_x^2) (alpha - beta)^2`.
pub fn band_radius2(p: &TapParams, a: f64, b: f64) -> Result<f64> {
    let (al, be) = scaled(p, a, b);
    let (qm, qx) = (p.q_m, p.q_x);
    let d = qm - qx * qx;
    if !(d > 0.0) {
        return Err(domain(format!("q_m - q_x^2 = {d} must be positive")));
    }
    Ok(1.0 - qm * (1.0 + al) * (1.0 + al) - qm * qx * qx / d * (al - be) * (al - be))
}

pub fn band(p: &TapParams, a: f64, b: f64) -> Result<BandGeometry> {
    let (al, be) = scaled(p, a, b);
    let (coef_m, coef_x, v_norm2) = center(p, al, be)?;
    let r2 = band_radius2(p, a, b)?;
    if !(r2 > 0.0) {
        return Err(domain(format!("slice radius^2 = {r2} is not positive")));
    }
    let xi = &p.xi_t;
    let qa = p.q_m * (1.0 + al);
    let ratio = xi.deriv(qa, 1).powi(2) / xi.deriv(p.q_m, 1);
    // coefficients of xi_t(w + r^2 s) in powers of s, for s^1..s^deg
    let deg = xi.degree();
    let mut coeffs = vec![0.0; deg];
    for k in 1..=deg {
        let mut acc = 0.0;
        for pp in k..=deg {
            let c = xi.gamma_sq(pp) + if pp == 1 { xi.tilt() } else { 0.0 };
            acc += c * binomial(pp, k) * v_norm2.powi((pp - k) as i32);
        }
        coeffs[k - 1] = acc * r2.powi(k as i32);
    }
    coeffs[0] -= r2 * ratio;
    let xi_ab_linear = coeffs[0];
    coeffs[0] = coeffs[0].max(0.0);
    let kappa_ratio = xi.deriv(p.q_m, 2) / (xi.gamma_q(p.q_m, 1)? * xi.deriv(p.q_m, 1));
    let gamma_a = qa * xi.deriv(qa, 1);
    let v_ab = xi.value(v_norm2) - v_norm2 * ratio + kappa_ratio * gamma_a * gamma_a;
    Ok(BandGeometry { a, b, coef_m, coef_x, v_norm2, r2, xi_ab: MixtureFunction::new(coeffs)?, xi_ab_linear, v_ab })
}

/// `sqrt(N) v(a,b)` as a vector, for a concrete `m` and spike.
pub fn band_center(ctx: &TapContext, m: &[f64], a: f64, b: f64) -> Result<Vec<f64>> {
    let g = band(&ctx.params(m)?, a, b)?;
    Ok(m.iter().zip(ctx.x.coords()).map(|(mi, xi)| g.coef_m * mi + g.coef_x * xi).collect())
}

/// `E_hat_{a,b}` transcribed from its expanded closed form.
pub fn e_hat(p: &TapParams, a: f64, b: f64) -> Result<f64> {
    let (al, be) = scaled(p, a, b);
    let (_, _, w) = center(p, al, be)?;
    let r2 = band_radius2(p, a, b)?;
    if !(r2 > 0.0) {
        return Err(domain(format!("log of nonpositive radius^2 {r2}")));
    }
    let xi = &p.xi_t;
    let (qm, qx) = (p.q_m, p.q_x);
    let qa = qm * (1.0 + al);
    let d1m = xi.deriv(qm, 1);
    let d1a = xi.deriv(qa, 1);
    let gp = xi.gamma_q(qm, 1)?;
    let gamma_x = qx * xi.deriv(qx, 1);
    let gamma_a = qa * d1a;
    let first = 0.5 * (r2.ln() - xi.value(w) - r2 * d1a * d1a / d1m);
    let second = -gamma_x * d1a / d1m * ((1.0 + be) - qm * xi.deriv(qm, 2) / gp * (1.0 + al));
    let third = xi.value(qx * (1.0 + be)) + gamma_a / gp * ((1.0 - qm) * xi.deriv(qm, 2) + 1.0 / (1.0 - qm));
    Ok(first + second + third)
}

/// `E_hat_{a,b} = xi_{a,b}(1)/2 + log r_{a,b} + E H_TAP(sqrt(N) v(a,b)) / N - xi_t(1)/2`,
/// assembled from [`band`] and the conditional mean written in overlaps.
pub fn e_hat_composed(p: &TapParams, a: f64, b: f64) -> Result<f64> {
    let g = band(p, a, b)?;
    let (al, be) = scaled(p, a, b);
    let law = LawScalars::new(&p.xi_t, p.q_m, p.q_x)?;
    let mean = law.mean(p.q_x * (1.0 + be), p.q_m * (1.0 + al));
    // unclipped xi_{a,b}(1)
    let xi_ab_1 = g.xi_ab.value(1.0) - g.xi_ab.gamma_sq(1) + g.xi_ab_linear;
    Ok(0.5 * xi_ab_1 + 0.5 * g.r2.ln() + mean - 0.5 * p.xi_t.value(1.0))
}

/// `N grad E_hat` at `(a, b)` by central differences in `(a/sqrt N, b/sqrt N)` with step
/// [`FD_STEP`], Richardson-extrapolated against half that step to cancel the `h^2` term.
pub fn e_hat_gradient(p: &TapParams, a: f64, b: f64) -> Result<[f64; 2]> {
    let s = p.n.sqrt();
    let central = |h: f64| -> Result<[f64; 2]> {
        let d = h * s;
        Ok([
            (e_hat(p, a + d, b)? - e_hat(p, a - d, b)?) / (2.0 * h),
            (e_hat(p, a, b + d)? - e_hat(p, a, b - d)?) / (2.0 * h),
        ])
    };
    let coarse = central(FD_STEP)?;
    let fine = central(0.5 * FD_STEP)?;
    Ok([s * (4.0 * fine[0] - coarse[0]) / 3.0, s * (4.0 * fine[1] - coarse[1]) / 3.0])
}

/// `N grad^2 E_hat` at `(a, b)` by central differences in `(a/sqrt N, b/sqrt N)`.
pub fn e_hat_hessian(p: &TapParams, a: f64, b: f64) -> Result<[[f64; 2]; 2]> {
    let d = FD_STEP * p.n.sqrt();
    let h2 = FD_STEP * FD_STEP;
    let f = |da: f64, db: f64| e_hat(p, a + da * d, b + db * d);
    let c = f(0.0, 0.0)?;
    let aa = (f(1.0, 0.0)? - 2.0 * c + f(-1.0, 0.0)?) / h2;
    let bb = (f(0.0, 1.0)? - 2.0 * c + f(0.0, -1.0)?) / h2;
    let ab = (f(1.0, 1.0)? - f(1.0, -1.0)? - f(-1.0, 1.0)? + f(-1.0, -1.0)?) / (4.0 * h2);
    Ok([[aa, ab], [ab, bb]])
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn eig2(m: [[f64; 2]; 2]) -> [f64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    [0.5 * tr - disc, 0.5 * tr + disc]
}
