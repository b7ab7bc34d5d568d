//! Degree-2 random-matrix analysis: the function `G`, its critical point, partition-function
//! predictions, semicircle integrals, the Gaussian covariance heuristic and Monte Carlo
//! partition functions used to check them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::hamiltonian::{dot, Hamiltonian, SphereState};
use crate::mixture::classify;

/// Largest `xi''(0)` accepted by the degree-2 predictions.
pub const MAX_XI2: f64 = 1.0 - 1e-3;

/// Number of bootstrap resamples in [`mc_partition`].
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// `int f d rho_smc` with `rho_smc(x) = sqrt(4 - x^2) / (2 pi)` on `[-2, 2]`, by
/// Gauss-Chebyshev quadrature of the second kind with `nodes` nodes.
pub fn semicircle_integral<F: FnMut(f64) -> f64>(mut f: F, nodes: usize) -> f64 {
    let m = nodes.max(1);
    let step = PI / (m + 1) as f64;
    let mut acc = 0.0;
    for i in 1..=m {
        let th = step * i as f64;
        let s = th.sin();
        acc += s * s * f(2.0 * th.cos());
    }
    2.0 * acc / (m + 1) as f64
}

/// `f_0(x) = log(1 + xi'' - sqrt(xi'') x)`.
pub fn semicircle_f0(xi2: f64, x: f64) -> f64 {
    (1.0 + xi2 - xi2.sqrt() * x).ln()
}

/// `f_1(x) = 1 - 1 / (1 + xi'' - sqrt(xi'') x)`, the limit of `G'(gamma_0)` per eigenvalue of
/// the normalized GOE matrix `M`.
pub fn semicircle_f1(xi2: f64, x: f64) -> f64 {
    1.0 - 1.0 / (1.0 + xi2 - xi2.sqrt() * x)
}

/// `f_2(x) = 2 / (1 + xi'' - sqrt(xi'') x)^2`, the limit of `G''(gamma_0)` per eigenvalue.
pub fn semicircle_f2(xi2: f64, x: f64) -> f64 {
    let d = 1.0 + xi2 - xi2.sqrt() * x;
    2.0 / (d * d)
}

/// `(L_0, L_1, L_2)`, the semicircle averages of `f_0, f_1, f_2`.
pub fn semicircle_constants(xi2: f64, nodes: usize) -> Result<[f64; 3]> {
    if !(0.0..=MAX_XI2).contains(&xi2) {
        return Err(Error::Domain(format!("xi''(0) = {xi2} outside [0, {MAX_XI2}]")));
    }
    Ok([
        semicircle_integral(|x| semicircle_f0(xi2, x), nodes),
        semicircle_integral(|x| semicircle_f1(xi2, x), nodes),
        semicircle_integral(|x| semicircle_f2(xi2, x), nodes),
    ])
}

fn lambda_max(eigs: &[f64]) -> f64 {
    eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `G(gamma) = gamma - (1/2N) log det(gamma I - A)` and its first two derivatives, from the
/// eigenvalues of `A`.
pub fn g_function(eigs: &[f64], gamma: f64, order: usize) -> Result<f64> {
    if eigs.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    if !(gamma > lambda_max(eigs)) {
        return Err(Error::Domain(format!("gamma = {gamma} must exceed lambda_max(A)")));
    }
    let two_n = 2.0 * eigs.len() as f64;
    Ok(match order {
        0 => gamma - eigs.iter().map(|l| (gamma - l).ln()).sum::<f64>() / two_n,
        1 => 1.0 - eigs.iter().map(|l| 1.0 / (gamma - l)).sum::<f64>() / two_n,
        2 => eigs.iter().map(|l| 1.0 / ((gamma - l) * (gamma - l))).sum::<f64>() / two_n,
        _ => return Err(invalid(format!("G derivative order {order} not supported"))),
    })
}

/// Unique root of `G'` on `(lambda_max, lambda_max + 1/2]`, to `|G'| <= tol`.
pub fn gamma_star(eigs: &[f64], tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let top = lambda_max(eigs);
    let g1 = |g: f64| g_function(eigs, g, 1);
    let mut hi = top + 0.5;
    let mut lo = top;
    let ghi = g1(hi)?;
    if ghi.abs() <= tol {
        return Ok(hi);
    }
    // G'(top + 1/2) >= 0 always; Newton from the right stays to the right of the root since
    // G' is increasing and concave.
    let mut x = hi;
    for _ in 0..200 {
        let v = g1(x)?;
        if v.abs() <= tol {
            return Ok(x);
        }
        if v > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = g_function(eigs, x, 2)?;
        let newton = x - v / d;
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Err(Error::NoConvergence(format!("gamma_* not within {tol} after 200 iterations")))
}

/// `log Z_{N,2}` predicted by `sqrt(2 / G''(gamma_*)) (2e)^{-N/2} exp(N G(gamma_*))`.
pub fn z2_prediction(eigs: &[f64]) -> Result<f64> {
    let n = eigs.len() as f64;
    let g = gamma_star(eigs, 1e-14)?;
    let g0 = g_function(eigs, g, 0)?;
    let g2 = g_function(eigs, g, 2)?;
    Ok(0.5 * (2.0 / g2).ln() - 0.5 * n * (2.0f64.ln() + 1.0) + n * g0)
}

/// Closed form `N xi''/2 + log(1 - xi'')/2 - log det((1 + xi'') I - grad^2 H(0))/2` from the
/// eigenvalues of `grad^2 H(0)`; `None` if the shifted matrix is not positive definite.
pub fn deg2_closed_form(hess_eigs: &[f64], xi2: f64) -> Option<f64> {
    let n = hess_eigs.len() as f64;
    let mut logdet = 0.0;
    for mu in hess_eigs {
        let d = 1.0 + xi2 - mu;
        if !(d > 0.0) {
            return None;
        }
        logdet += d.ln();
    }
    Some(0.5 * n * xi2 + 0.5 * (1.0 - xi2).ln() - 0.5 * logdet)
}

/// A prediction that is only meaningful when the Hessian shift is positive definite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogZPrediction {
    pub value: f64,
    /// Smallest eigenvalue of `(1 + xi''(0)) I - grad^2 H(0)`.
    pub min_shift_eig: f64,
    pub valid: bool,
}

fn xi2_checked(h: &Hamiltonian) -> Result<f64> {
    let xi2 = h.mixture().deriv(0.0, 2);
    if xi2 > MAX_XI2 {
        return Err(Error::Domain(format!("xi''(0) = {xi2} exceeds {MAX_XI2}")));
    }
    Ok(xi2)
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// `N xi(1)/2 + N xi''(0)/4 + log(1 - xi''(0))/2 - log det((1 + xi''(0)) I - grad^2 H(0))/2`.
///
/// Requires a strictly replica-symmetric mixture with `gamma_1^2 <= N^{-4/5}`.
pub fn logz_full_prediction(h: &Hamiltonian) -> Result<LogZPrediction> {
    let m = h.mixture();
    let n = h.dim() as f64;
    let report = classify(m, 10_000)?;
    if !(report.strict_rs_eps > 0.0) {
        return Err(Error::Regime("mixture is not strictly replica symmetric".into()));
    }
    if m.linear_variance() > n.powf(-0.8) {
        return Err(Error::Regime(format!("gamma_1^2 = {} exceeds N^(-4/5)", m.linear_variance())));
    }
    let xi2 = xi2_checked(h)?;
    let (eigs, _) = sorted_eigen(h.hessian_origin());
    let min_shift_eig = 1.0 + xi2 - lambda_max(&eigs);
    let valid = min_shift_eig > 0.0;
    let logdet: f64 = eigs.iter().map(|mu| (1.0 + xi2 - mu).ln()).sum();
    let value = 0.5 * n * m.value(1.0) + 0.25 * n * xi2 + 0.5 * (1.0 - xi2).ln() - 0.5 * logdet;
    Ok(LogZPrediction { value: if valid { value } else { f64::NAN }, min_shift_eig, valid })
}

/// The Gaussian covariance heuristic `((1 + xi''(0)) I - grad^2 H(0))^{-1}`.
#[derive(Clone, Debug)]
pub struct CovPrediction {
    pub matrix: DMatrix<f64>,
    /// Ascending eigenvalues `lambda_i` of `grad^2 H(0)`.
    pub hessian_eigenvalues: Vec<f64>,
    /// Matching unit eigenvectors (columns).
    pub eigenvectors: DMatrix<f64>,
    /// Predicted `Var <sigma, v_i> = 1 / (1 + xi''(0) - lambda_i)`.
    pub eigen_variances: Vec<f64>,
    pub trace_over_n: f64,
    pub valid: bool,
}

pub fn cov_prediction(h: &Hamiltonian) -> Result<CovPrediction> {
    let xi2 = h.mixture().deriv(0.0, 2);
    let n = h.dim();
    let (eigs, vecs) = sorted_eigen(h.hessian_origin());
    let valid = eigs.iter().all(|mu| 1.0 + xi2 - mu > 0.0);
    let vars: Vec<f64> = eigs.iter().map(|mu| 1.0 / (1.0 + xi2 - mu)).collect();
    let mut matrix = DMatrix::zeros(n, n);
    for k in 0..n {
        let v = vecs.column(k);
        matrix += vars[k] * v * v.transpose();
    }
    let trace_over_n = vars.iter().sum::<f64>() / n as f64;
    Ok(CovPrediction {
        matrix,
        hessian_eigenvalues: eigs,
        eigenvectors: vecs,
        eigen_variances: vars,
        trace_over_n,
        valid,
    })
}

/// Everything the degree-2 analysis derives from one disorder draw.
#[derive(Clone, Debug)]
pub struct Deg2Analysis {
    /// `A = grad^2 H(0) / 2`.
    pub a: DMatrix<f64>,
    /// Ascending eigenvalues of `A`.
    pub a_eigenvalues: Vec<f64>,
    pub gamma_star: f64,
    /// `G, G', G''` at `gamma_star`.
    pub g: [f64; 3],
    pub logz2_prediction: f64,
    /// The Hessian-shift closed form of the degree-2 partition function.
    pub logz2_closed_form: Option<f64>,
    /// Present when the mixture qualifies for the full prediction.
    pub logz_full_prediction: Option<LogZPrediction>,
    pub cov_prediction: CovPrediction,
}

pub fn analyze_deg2(h: &Hamiltonian) -> Result<Deg2Analysis> {
    let xi2 = xi2_checked(h)?;
    let hess = h.hessian_origin();
    let a = hess.clone() * 0.5;
    let (hess_eigs, _) = sorted_eigen(hess);
    let a_eigenvalues: Vec<f64> = hess_eigs.iter().map(|v| 0.5 * v).collect();
    let gs = gamma_star(&a_eigenvalues, 1e-14)?;
    let g =
        [g_function(&a_eigenvalues, gs, 0)?, g_function(&a_eigenvalues, gs, 1)?, g_function(&a_eigenvalues, gs, 2)?];
    Ok(Deg2Analysis {
        a,
        logz2_prediction: z2_prediction(&a_eigenvalues)?,
        logz2_closed_form: deg2_closed_form(&hess_eigs, xi2),
        a_eigenvalues,
        gamma_star: gs,
        g,
        logz_full_prediction: logz_full_prediction(h).ok(),
        cov_prediction: cov_prediction(h)?,
    })
}

/// Monte Carlo estimate of `log E_sigma exp(H(sigma))` over the uniform sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub log_z: f64,
    /// 95% percentile bootstrap interval.
    pub ci: (f64, f64),
    /// Bootstrap standard deviation of `log_z`.
    pub std_err: f64,
    pub samples: usize,
}

/// Plain Monte Carlo with log-sum-exp accumulation. The bootstrap resamples batch sums (about
/// a thousand batches) rather than single draws.
pub fn mc_partition<R: Rng + ?Sized>(h: &Hamiltonian, samples: usize, rng: &mut R) -> Result<McEstimate> {
    if samples < 10_000 {
        return Err(invalid(format!("need at least 10^4 samples, got {samples}")));
    }
    let n = h.dim();
    let batches = 1000usize;
    let base = samples / batches;
    let extra = samples % batches;
    let mut sigma = vec![0.0; n];
    let mut buf = Vec::with_capacity(base + 1);
    // each batch: (log of sum of exp(H), count)
    let mut logsums = Vec::with_capacity(batches);
    for b in 0..batches {
        let size = base + usize::from(b < extra);
        buf.clear();
        for _ in 0..size {
            let mut norm2 = 0.0;
            for v in sigma.iter_mut() {
                *v = rng.sample(StandardNormal);
                norm2 += *v * *v;
            }
            let scale = (n as f64 / norm2).sqrt();
            sigma.iter_mut().for_each(|v| *v *= scale);
            buf.push(h.energy_unchecked(&sigma));
        }
        logsums.push((log_sum_exp(&buf), size));
    }
    let estimate = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
        let mut ls = Vec::with_capacity(batches);
        let mut count = 0usize;
        for k in idx {
            ls.push(logsums[k].0);
            count += logsums[k].1;
        }
        log_sum_exp(&ls) - (count as f64).ln()
    };
    let log_z = estimate(&mut (0..batches));
    let mut boots: Vec<f64> =
        (0..BOOTSTRAP_RESAMPLES).map(|_| estimate(&mut (0..batches).map(|_| rng.random_range(0..batches)))).collect();
    boots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / (boots.len() - 1) as f64;
    let lo = boots[(0.025 * BOOTSTRAP_RESAMPLES as f64) as usize];
    let hi = boots[(0.975 * BOOTSTRAP_RESAMPLES as f64) as usize - 1];
    Ok(McEstimate { log_z, ci: (lo, hi), std_err: var.sqrt(), samples })
}

/// `log sum exp(v)`; `-inf` for an empty slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Power-iteration estimate of an operator norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpNorm {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `| (1/m) sum_k sigma_k sigma_k^T |_op` by power iteration (tol `1e-8`, at most `10^4` steps),
/// never forming the matrix.
pub fn second_moment_opnorm(samples: &[SphereState]) -> Result<OpNorm> {
    if samples.len() < 2 {
        return Err(invalid("need at least two samples"));
    }
    let n = samples[0].dim();
    for s in samples {
        check_dim(n, s.dim())?;
    }
    let m = samples.len() as f64;
    let golden = 0.618_033_988_749_895;
    let mut v = vec![0.0; n];
    for (j, s) in samples.iter().enumerate() {
        let c = 1.0 + (j as f64 * golden).fract();
        v.iter_mut().zip(s.coords()).for_each(|(a, b)| *a += c * b);
    }
    let mut w = vec![0.0; n];
    let mut value = 0.0;
    for it in 1..=10_000 {
        let norm = dot(&v, &v).sqrt();
        if !(norm > 0.0) {
            return Ok(OpNorm { value: 0.0, converged: true, iterations: it });
        }
        v.iter_mut().for_each(|a| *a /= norm);
        w.iter_mut().for_each(|a| *a = 0.0);
        for s in samples {
            let c = dot(s.coords(), &v) / m;
            w.iter_mut().zip(s.coords()).for_each(|(a, b)| *a += c * b);
        }
        let next = dot(&w, &v);
        core::mem::swap(&mut v, &mut w);
        if (next - value).abs() <= 1e-8 * next.abs() {
            return Ok(OpNorm { value: next, converged: true, iterations: it });
        }
        value = next;
    }
    Ok(OpNorm { value, converged: false, iterations: 10_000 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::MixtureFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn g_at_zero_matrix() {
        let eigs = [0.0; 7];
        assert!((g_function(&eigs, 0.5, 1).unwrap()).abs() < 1e-15);
        assert!((g_function(&eigs, 0.5, 2).unwrap() - 2.0).abs() < 1e-15);
        assert!((g_function(&eigs, 0.5, 0).unwrap() - (0.5 + 0.5 * 2f64.ln())).abs() < 1e-15);
        assert_eq!(gamma_star(&eigs, 1e-12).unwrap(), 0.5);
        assert!(z2_prediction(&eigs).unwrap().abs() < 1e-12);
        assert!(g_function(&eigs, 0.0, 0).is_err());
    }

    #[test]
    fn gamma_star_shifts_with_identity() {
        let eigs = [0.3; 5];
        assert!((gamma_star(&eigs, 1e-13).unwrap() - 0.8).abs() < 1e-12);
        let mixed = [-0.4, 0.1, 0.25, 0.3];
        let g = gamma_star(&mixed, 1e-13).unwrap();
        assert!(g_function(&mixed, g, 1).unwrap().abs() <= 1e-13);
    }

    #[test]
    fn g_derivatives_match_finite_differences() {
        let eigs = [-0.7, -0.1, 0.2, 0.45];
        let g = 0.9;
        let e = 1e-5;
        let fd1 = (g_function(&eigs, g + e, 0).unwrap() - g_function(&eigs, g - e, 0).unwrap()) / (2.0 * e);
        let fd2 = (g_function(&eigs, g + e, 1).unwrap() - g_function(&eigs, g - e, 1).unwrap()) / (2.0 * e);
        let d1 = g_function(&eigs, g, 1).unwrap();
        let d2 = g_function(&eigs, g, 2).unwrap();
        assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1.0));
        assert!((fd2 - d2).abs() <= 1e-6 * d2.abs());
    }

    #[test]
    fn semicircle_quadrature() {
        assert!((semicircle_integral(|_| 1.0, 64) - 1.0).abs() < 1e-14);
        assert!((semicircle_integral(|x| x * x, 64) - 1.0).abs() < 1e-14);
        assert!((semicircle_integral(|x| x.powi(4), 64) - 2.0).abs() < 1e-13);
        for xi2 in [0.1, 0.25, 0.5] {
            let [l0, l1, l2] = semicircle_constants(xi2, 2000).unwrap();
            assert!((l0 - xi2 / 2.0).abs() < 1e-10);
            assert!(l1.abs() < 1e-10);
            assert!((l2 * (1.0 - xi2) / 2.0 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_disorder_covariance() {
        let h = Hamiltonian::without_disorder(&MixtureFunction::zero(), 4).unwrap();
        let c = cov_prediction(&h).unwrap();
        assert!(c.valid);
        assert!((c.trace_over_n - 1.0).abs() < 1e-15);
        let mc = mc_partition(&h, 10_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(mc.log_z, 0.0);
    }

    #[test]
    fn spike_partition_matches_overlap_quadrature() {
        let n = 8;
        let s = MixtureFunction::pure(2, 1.0).unwrap();
        let x = SphereState::basis(n, 0).unwrap();
        let h = Hamiltonian::without_disorder(&MixtureFunction::zero(), n).unwrap().plant(&x, &s).unwrap();
        // overlap density proportional to (1 - q^2)^{(N-3)/2}
        let grid = 20_000;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..grid {
            let q = -1.0 + (i as f64 + 0.5) * 2.0 / grid as f64;
            let w = (1.0 - q * q).powf((n as f64 - 3.0) / 2.0);
            num += w * (n as f64 * q * q).exp();
            den += w;
        }
        let want = (num / den).ln();
        let mc = mc_partition(&h, 200_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!((mc.log_z - want).abs() < 4.0 * mc.std_err + 1e-3, "{} vs {want} (se {})", mc.log_z, mc.std_err);
    }

    #[test]
    fn second_moment_norms() {
        let s = SphereState::new(vec![1.0, 2.0, -1.0]).unwrap();
        let r = second_moment_opnorm(&[s.clone(), s]).unwrap();
        assert!((r.value - 3.0).abs() < 1e-9);
        let a = SphereState::basis(4, 0).unwrap();
        let b = SphereState::basis(4, 2).unwrap();
        assert!((second_moment_opnorm(&[a, b]).unwrap().value - 2.0).abs() < 1e-9);
    }
}
