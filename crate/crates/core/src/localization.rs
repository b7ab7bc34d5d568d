//! Stochastic localization with identity driving matrix on finitely supported measures:
//! exact exponential tilts, simulated paths, covariance stopping and conservation of variance.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::SymmetricEigen;
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::functional::DiscreteMeasure;

/// Default number of grid steps on `[0, T]`.
pub const DEFAULT_STEPS: usize = 100;

/// `pi` reweighted by `exp(<y, x> - (t/2) |x|^2)` and renormalized (in log space).
pub fn tilt_exact(pi: &DiscreteMeasure, y: &[f64], t: f64) -> Result<DiscreteMeasure> {
    check_dim(pi.dim(), y.len())?;
    if !(t >= 0.0) {
        return Err(invalid("tilt time must be nonnegative"));
    }
    let mut x = vec![0.0; pi.dim()];
    let mut logw = vec![f64::NEG_INFINITY; pi.len()];
    for (k, w) in pi.weights().iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        pi.atom_into(k, &mut x);
        let lin: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sq: f64 = x.iter().map(|a| a * a).sum();
        logw[k] = w.ln() + lin - 0.5 * t * sq;
    }
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Singular("tilted weights are not finite".into()));
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    pi.reweighted(w)
}

/// Operator norm of the covariance of the atom coordinates.
pub fn cov_opnorm(mu: &DiscreteMeasure) -> f64 {
    let c = mu.covariance();
    if c.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(c).eigenvalues.iter().copied().fold(0.0, f64::max)
}

/// A simulated localization path on the grid `t_k = k T / steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationPath {
    /// Grid times up to and including the stopping time.
    pub times: Vec<f64>,
    /// `y_{t_k}` for every retained grid time; `y[0] = 0`.
    pub y: Vec<Vec<f64>>,
    /// `|Cov(mu_{t_k})|_op` for every retained grid time.
    pub cov_opnorm: Vec<f64>,
    /// Stopping time `tau` (the last retained grid time).
    pub stopped_at: f64,
    /// Whether the covariance threshold triggered before `T`.
    pub stopped: bool,
    /// Index of the atom drawn from the initial measure.
    pub atom: usize,
    /// `mu_tau`.
    pub final_measure: DiscreteMeasure,
}

impl LocalizationPath {
    /// `mu_{t_k}` rebuilt from the stored field.
    pub fn measure_at(&self, pi0: &DiscreteMeasure, k: usize) -> Result<DiscreteMeasure> {
        tilt_exact(pi0, &self.y[k], self.times[k])
    }
}

fn sample_atom<R: Rng + ?Sized>(pi: &DiscreteMeasure, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in pi.weights().iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Unstopped path: `y_{t+D} = y_t + D sigma + sqrt(D) zeta` with `sigma ~ pi0` drawn once.
pub fn sl_path<R: Rng + ?Sized>(pi0: &DiscreteMeasure, t: f64, steps: usize, rng: &mut R) -> Result<LocalizationPath> {
    stopped_path(pi0, t, steps, f64::INFINITY, rng)
}

/// Path stopped at the first grid time where `|Cov(mu_t)|_op >= k` (and is positive).
pub fn stopped_path<R: Rng + ?Sized>(
    pi0: &DiscreteMeasure,
    t: f64,
    steps: usize,
    k: f64,
    rng: &mut R,
) -> Result<LocalizationPath> {
    if steps == 0 || !(t >= 0.0) || !(k >= 0.0) {
        return Err(invalid("localization needs steps >= 1, T >= 0 and K >= 0"));
    }
    let d = pi0.dim();
    let atom = sample_atom(pi0, rng);
    let sigma = pi0.atom(atom);
    let dt = t / steps as f64;
    let mut y = vec![0.0; d];
    let mut path = LocalizationPath {
        times: Vec::new(),
        y: Vec::new(),
        cov_opnorm: Vec::new(),
        stopped_at: 0.0,
        stopped: false,
        atom,
        final_measure: pi0.clone(),
    };
    for step in 0..=steps {
        let time = dt * step as f64;
        let mu = if step == 0 { pi0.clone() } else { tilt_exact(pi0, &y, time)? };
        let op = cov_opnorm(&mu);
        path.times.push(time);
        path.y.push(y.clone());
        path.cov_opnorm.push(op);
        path.stopped_at = time;
        path.final_measure = mu;
        if hits(op, k) {
            path.stopped = true;
            break;
        }
        if step < steps {
            let sd = dt.sqrt();
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                y[i] += dt * sigma[i] + sd * z;
            }
        }
    }
    Ok(path)
}

fn hits(op: f64, k: f64) -> bool {
    op >= k && op > 0.0
}

/// Truncates an existing path at `tau = T ^ inf{ |Cov(mu_t)|_op >= k }` on its grid.
pub fn stop_tau(pi0: &DiscreteMeasure, path: &LocalizationPath, k: f64) -> Result<LocalizationPath> {
    let idx = match path.cov_opnorm.iter().position(|op| hits(*op, k)) {
        Some(i) => i,
        None => return Ok(path.clone()),
    };
    Ok(LocalizationPath {
        times: path.times[..=idx].to_vec(),
        y: path.y[..=idx].to_vec(),
        cov_opnorm: path.cov_opnorm[..=idx].to_vec(),
        stopped_at: path.times[idx],
        stopped: true,
        atom: path.atom,
        final_measure: path.measure_at(pi0, idx)?,
    })
}

/// Monte Carlo estimate of `E Var_{mu_tau}[phi] / Var_{pi0}[phi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceRatio {
    pub ratio: f64,
    pub std_err: f64,
    /// `exp(-T K)`.
    pub lower_bound: f64,
    /// `ratio < lower_bound - 3 std_err`.
    pub violated: bool,
}

/// Conservation-of-variance check for one test function.
pub fn variance_conservation<R: Rng + ?Sized>(
    pi0: &DiscreteMeasure,
    phi: &[f64],
    t: f64,
    k: f64,
    steps: usize,
    paths: usize,
    rng: &mut R,
) -> Result<VarianceRatio> {
    Ok(variance_conservation_many(pi0, &[phi.to_vec()], t, k, steps, paths, rng)?[0])
}

/// Conservation-of-variance check for several test functions sharing the same paths.
pub fn variance_conservation_many<R: Rng + ?Sized>(
    pi0: &DiscreteMeasure,
    phis: &[Vec<f64>],
    t: f64,
    k: f64,
    steps: usize,
    paths: usize,
    rng: &mut R,
) -> Result<Vec<VarianceRatio>> {
    if paths < 2 {
        return Err(invalid("need at least two paths for a standard error"));
    }
    let mut base = Vec::with_capacity(phis.len());
    for phi in phis {
        let v = pi0.variance(phi)?;
        if !(v > 1e-14) {
            return Err(Error::Domain("test function is constant on the support".into()));
        }
        base.push(v);
    }
    let mut sum = vec![0.0; phis.len()];
    let mut sum2 = vec![0.0; phis.len()];
    for _ in 0..paths {
        let path = stopped_path(pi0, t, steps, k, rng)?;
        for (j, phi) in phis.iter().enumerate() {
            let r = path.final_measure.variance(phi)? / base[j];
            sum[j] += r;
            sum2[j] += r * r;
        }
    }
    let m = paths as f64;
    let lower_bound = (-t * k).exp();
    Ok((0..phis.len())
        .map(|j| {
            let mean = sum[j] / m;
            let var = ((sum2[j] / m - mean * mean) * m / (m - 1.0)).max(0.0);
            let std_err = (var / m).sqrt();
            VarianceRatio { ratio: mean, std_err, lower_bound, violated: mean < lower_bound - 3.0 * std_err }
        })
        .collect())
}

/// Prior mass of an event against the Monte Carlo mean of its mass under `mu_T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventCheck {
    pub prior: f64,
    pub mean: f64,
    pub std_err: f64,
}

impl EventCheck {
    pub fn deviation(&self) -> f64 {
        (self.mean - self.prior).abs()
    }
}

/// Martingale check `E mu_T(A) = pi0(A)` over unstopped paths, for events given as atom
/// indicator tables.
pub fn event_martingale<R: Rng + ?Sized>(
    pi0: &DiscreteMeasure,
    events: &[Vec<bool>],
    t: f64,
    steps: usize,
    paths: usize,
    rng: &mut R,
) -> Result<Vec<EventCheck>> {
    if paths < 2 {
        return Err(invalid("need at least two paths for a standard error"));
    }
    for e in events {
        check_dim(pi0.len(), e.len())?;
    }
    let mass = |mu: &DiscreteMeasure, e: &[bool]| -> f64 {
        mu.weights().iter().zip(e).filter(|(_, inside)| **inside).map(|(w, _)| w).sum()
    };
    let mut sum = vec![0.0; events.len()];
    let mut sum2 = vec![0.0; events.len()];
    for _ in 0..paths {
        let path = sl_path(pi0, t, steps, rng)?;
        for (j, e) in events.iter().enumerate() {
            let v = mass(&path.final_measure, e);
            sum[j] += v;
            sum2[j] += v * v;
        }
    }
    let m = paths as f64;
    Ok(events
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let mean = sum[j] / m;
            let var = ((sum2[j] / m - mean * mean) * m / (m - 1.0)).max(0.0);
            EventCheck { prior: mass(pi0, e), mean, std_err: (var / m).sqrt() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_tilt_is_identity() {
        let pi = DiscreteMeasure::product_cube(&[0.2, 0.7, 0.5]).unwrap();
        let mu = tilt_exact(&pi, &[0.0; 3], 0.0).unwrap();
        for (a, b) in mu.weights().iter().zip(pi.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_atom_tilt_mean() {
        let pi = DiscreteMeasure::cube(1, vec![0.3, 0.7]).unwrap();
        let s = 0.8;
        let mu = tilt_exact(&pi, &[s], 2.0).unwrap();
        let want = (s + 0.5 * (0.7f64 / 0.3).ln()).tanh();
        assert!((mu.mean()[0] - want).abs() < 1e-14);
        let far = tilt_exact(&pi, &[-1e4], 0.0).unwrap();
        assert_eq!(far.weights()[0], 1.0);
    }

    #[test]
    fn stopping_rules() {
        let pi = DiscreteMeasure::uniform_cube(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let free = stopped_path(&pi, 1.0, 10, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(free.stopped_at, 1.0);
        assert_eq!(free.times.len(), 11);
        let zero = stopped_path(&pi, 1.0, 10, 0.0, &mut rng).unwrap();
        assert_eq!(zero.stopped_at, 0.0);
        let truncated = stop_tau(&pi, &free, free.cov_opnorm[4]).unwrap();
        assert!(truncated.stopped_at <= free.times[4]);
        let point = DiscreteMeasure::cube(2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let p = stopped_path(&point, 1.0, 10, 0.0, &mut rng).unwrap();
        assert!(!p.stopped);
        assert_eq!(p.stopped_at, 1.0);
    }

    #[test]
    fn zero_time_is_exactly_the_prior() {
        let pi = DiscreteMeasure::product_cube(&[0.3, 0.6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ev = vec![vec![true, false, false, true]];
        let r = event_martingale(&pi, &ev, 0.0, 5, 10, &mut rng).unwrap();
        assert!(r[0].deviation() < 1e-15);
        assert_eq!(r[0].std_err, 0.0);
    }

    #[test]
    fn zero_time_keeps_variance() {
        let pi = DiscreteMeasure::product_cube(&[0.3, 0.6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = variance_conservation(&pi, &[0.0, 1.0, 2.0, 5.0], 0.0, 1.0, 10, 10, &mut rng).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);
        assert!(variance_conservation(&pi, &[1.0; 4], 1.0, 1.0, 10, 10, &mut rng).is_err());
    }
}
