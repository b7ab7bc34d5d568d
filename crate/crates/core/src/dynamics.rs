//! Riemannian Langevin integration on the sphere, annealed schedules, exact Glauber
//! transition matrices and the annealing total-variation bound.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::functional::{glauber_kernel, DiscreteMeasure};
use crate::hamiltonian::{dot, project_tangent, Hamiltonian, SphereState};
use crate::mixture::{classify, MixtureFunction};

/// Constant multiplying the annealing bound, covering the `16 + 4` coefficients of the
/// per-stage estimate.
pub const ANNEAL_BOUND_CONSTANT: f64 = 20.0;

/// Default integrator step `0.01 / (1 + beta sqrt(xi''(1)))`.
pub fn default_step(m: &MixtureFunction, beta: f64) -> f64 {
    0.01 / (1.0 + beta.abs() * m.deriv(1.0, 2).max(0.0).sqrt())
}

/// Scratch buffers for [`langevin_step_in_place`].
#[derive(Clone, Debug, Default)]
pub struct LangevinWorkspace {
    grad: Vec<f64>,
    noise: Vec<f64>,
}

impl LangevinWorkspace {
    pub fn new(n: usize) -> Self {
        Self { grad: vec![0.0; n], noise: vec![0.0; n] }
    }
}

/// Outcome of one in-place step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// Energy at the state before the step.
    pub energy: f64,
    /// `| |sigma~|^2 / N - 1 |` before renormalization.
    pub renorm_drift: f64,
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(invalid(format!("step size must be positive, got {step}")));
    }
    Ok(())
}

/// One projected Euler-Maruyama step with caller-supplied standard normal `zeta`:
/// `sigma + step beta grad_sp H(sigma) + sqrt(2 step) P_sigma zeta`, rescaled onto the sphere.
pub fn langevin_step_with_noise(
    sigma: &SphereState,
    h: &Hamiltonian,
    beta: f64,
    step: f64,
    zeta: &[f64],
) -> Result<SphereState> {
    check_dim(h.dim(), sigma.dim())?;
    check_dim(h.dim(), zeta.len())?;
    check_step(step)?;
    let mut s = sigma.coords().to_vec();
    let mut ws = LangevinWorkspace::new(h.dim());
    ws.noise.copy_from_slice(zeta);
    advance(&mut s, h, beta, step, &mut ws)?;
    SphereState::new(s)
}

/// One projected Euler-Maruyama step with Gaussian noise drawn from `rng`.
pub fn langevin_step<R: Rng + ?Sized>(
    sigma: &SphereState,
    h: &Hamiltonian,
    beta: f64,
    step: f64,
    rng: &mut R,
) -> Result<SphereState> {
    check_dim(h.dim(), sigma.dim())?;
    check_step(step)?;
    let mut s = sigma.coords().to_vec();
    let mut ws = LangevinWorkspace::new(h.dim());
    langevin_step_in_place(&mut s, h, beta, step, rng, &mut ws)?;
    SphereState::new(s)
}

/// In-place step on raw coordinates (assumed on the sphere). On error `s` is left unchanged.
pub fn langevin_step_in_place<R: Rng + ?Sized>(
    s: &mut [f64],
    h: &Hamiltonian,
    beta: f64,
    step: f64,
    rng: &mut R,
    ws: &mut LangevinWorkspace,
) -> Result<StepInfo> {
    if ws.noise.len() != s.len() {
        *ws = LangevinWorkspace::new(s.len());
    }
    for z in ws.noise.iter_mut() {
        *z = rng.sample(StandardNormal);
    }
    advance(s, h, beta, step, ws)
}

fn advance(s: &mut [f64], h: &Hamiltonian, beta: f64, step: f64, ws: &mut LangevinWorkspace) -> Result<StepInfo> {
    let n = s.len();
    if ws.grad.len() != n {
        ws.grad = vec![0.0; n];
    }
    let energy = h.gradient_energy_into(s, &mut ws.grad);
    project_tangent(s, &mut ws.grad);
    project_tangent(s, &mut ws.noise);
    let amp = (2.0 * step).sqrt();
    let drift = step * beta;
    // reuse grad as the proposal
    for i in 0..n {
        ws.grad[i] = s[i] + drift * ws.grad[i] + amp * ws.noise[i];
    }
    let norm2 = dot(&ws.grad, &ws.grad);
    if !norm2.is_finite() || !(norm2 > 0.0) || !energy.is_finite() {
        return Err(Error::Integrator { step: 0, state: s.to_vec() });
    }
    let scale = (n as f64 / norm2).sqrt();
    for i in 0..n {
        s[i] = ws.grad[i] * scale;
    }
    Ok(StepInfo { energy, renorm_drift: (norm2 / n as f64 - 1.0).abs() })
}

/// Piecewise-constant inverse-temperature schedule `beta = 0, delta, ..., beta_max`, each held
/// for time `stage_time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealSchedule {
    pub delta: f64,
    pub stage_time: f64,
    pub beta_max: f64,
    pub step_size: f64,
}

impl AnnealSchedule {
    pub fn new(delta: f64, stage_time: f64, beta_max: f64, step_size: f64) -> Result<Self> {
        if !(delta > 0.0) || !(stage_time > 0.0) || !(beta_max >= 0.0) || !(step_size > 0.0) {
            return Err(invalid("schedule needs delta > 0, T > 0, beta_max >= 0, h > 0"));
        }
        if step_size > stage_time {
            return Err(invalid(format!("step {step_size} exceeds stage time {stage_time}")));
        }
        integral_ratio(beta_max, delta)?;
        Ok(Self { delta, stage_time, beta_max, step_size })
    }

    /// Defaults at dimension `n`: `T = 5 N^{1/5}`, `delta = beta_max / ceil(beta_max / delta_N)`
    /// with `delta_N = 0.5 N^{-4/5}`, and the default integrator step.
    pub fn with_defaults(n: usize, beta_max: f64, m: &MixtureFunction) -> Result<Self> {
        let nf = n.max(1) as f64;
        let stage_time = 5.0 * nf.powf(0.2);
        let delta_n = 0.5 * nf.powf(-0.8);
        let delta = if beta_max > 0.0 { beta_max / (beta_max / delta_n).ceil() } else { delta_n };
        Self::new(delta, stage_time, beta_max, default_step(m, beta_max).min(stage_time))
    }

    /// `k0 = beta_max / delta`.
    pub fn k0(&self) -> usize {
        (self.beta_max / self.delta).round() as usize
    }

    pub fn stages(&self) -> usize {
        self.k0() + 1
    }

    /// Inverse temperature of stage `k`.
    pub fn beta(&self, k: usize) -> f64 {
        if k >= self.k0() {
            self.beta_max
        } else {
            k as f64 * self.delta
        }
    }

    /// `floor(total_time / h)`.
    pub fn total_steps(&self) -> usize {
        self.stage_end(self.stages())
    }

    /// Steps taken in stage `k`, so that stage boundaries sit at `floor(k T / h)`.
    pub fn steps_in_stage(&self, k: usize) -> usize {
        self.stage_end(k + 1) - self.stage_end(k)
    }

    fn stage_end(&self, k: usize) -> usize {
        (k as f64 * self.stage_time / self.step_size + 1e-9).floor() as usize
    }
}

fn integral_ratio(beta_max: f64, delta: f64) -> Result<usize> {
    let k = beta_max / delta;
    let r = k.round();
    if (k - r).abs() > 1e-9 * r.max(1.0) {
        return Err(invalid(format!("beta_max / delta = {k} is not an integer")));
    }
    Ok(r as usize)
}

/// Source of elapsed seconds for per-stage timing.
pub trait Clock {
    fn seconds(&mut self) -> f64;
}

/// A clock that always reads zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&mut self) -> f64 {
        0.0
    }
}

/// Integrator blow-up record.
#[derive(Clone, Debug, PartialEq)]
pub struct Blowup {
    pub stage: usize,
    pub step: usize,
    /// Last finite state before the failed step.
    pub state: Vec<f64>,
}

/// Per-run traces of an annealed chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainDiagnostics {
    /// `H(sigma)/N` before every step; `NaN` for steps skipped after a blow-up.
    pub energy_per_spin: Vec<f64>,
    pub stage_betas: Vec<f64>,
    /// Overlap of the state at the end of each stage with the initial state.
    pub overlap_with_start: Vec<f64>,
    /// Largest renormalization drift seen in each stage.
    pub max_renorm_drift: Vec<f64>,
    pub stage_seconds: Vec<f64>,
    pub blowups: Vec<Blowup>,
    /// Set when the mixture at `beta_max` fails the stochastic-localization condition.
    pub sl_warning: bool,
}

/// Annealed Langevin from a uniform initial state.
pub fn run_annealed<R: Rng + ?Sized, C: Clock + ?Sized>(
    h: &Hamiltonian,
    s: &AnnealSchedule,
    rng: &mut R,
    clock: &mut C,
) -> Result<(SphereState, ChainDiagnostics)> {
    let init = SphereState::uniform(h.dim(), rng);
    run_annealed_from(h, s, init, rng, clock)
}

/// Annealed Langevin from a given initial state.
pub fn run_annealed_from<R: Rng + ?Sized, C: Clock + ?Sized>(
    h: &Hamiltonian,
    s: &AnnealSchedule,
    init: SphereState,
    rng: &mut R,
    clock: &mut C,
) -> Result<(SphereState, ChainDiagnostics)> {
    check_dim(h.dim(), init.dim())?;
    let n = h.dim();
    let nf = n as f64;
    let mut diag = ChainDiagnostics {
        sl_warning: !classify(&h.mixture().scaled(s.beta_max), 10_000).map(|r| r.sl).unwrap_or(false),
        ..Default::default()
    };
    diag.energy_per_spin.reserve(s.total_steps());
    let start = init.coords().to_vec();
    let mut cur = init.into_vec();
    let mut ws = LangevinWorkspace::new(n);
    for k in 0..s.stages() {
        let beta = s.beta(k);
        let t0 = clock.seconds();
        let steps = s.steps_in_stage(k);
        let mut drift: f64 = 0.0;
        for j in 0..steps {
            match langevin_step_in_place(&mut cur, h, beta, s.step_size, rng, &mut ws) {
                Ok(info) => {
                    diag.energy_per_spin.push(info.energy / nf);
                    drift = drift.max(info.renorm_drift);
                }
                Err(_) => {
                    diag.blowups.push(Blowup { stage: k, step: j, state: cur.clone() });
                    diag.energy_per_spin.extend(core::iter::repeat_n(f64::NAN, steps - j));
                    break;
                }
            }
        }
        diag.stage_betas.push(beta);
        diag.overlap_with_start.push(dot(&cur, &start) / nf);
        diag.max_renorm_drift.push(drift);
        diag.stage_seconds.push(clock.seconds() - t0);
    }
    Ok((SphereState::new(cur)?, diag))
}

/// Row-stochastic single-site Glauber matrix on `{-1,+1}^n` (dense, `n <= 12`).
pub fn glauber_matrix(pi: &DiscreteMeasure) -> Result<DMatrix<f64>> {
    if pi.cube_bits().is_none() {
        return Err(invalid("Glauber dynamics needs a measure on the hypercube"));
    }
    if let Some(k) = pi.weights().iter().position(|w| *w <= 0.0) {
        return Err(Error::Domain(format!("state {k} has zero mass; detailed balance is undefined")));
    }
    glauber_kernel(pi)
}

/// Annealing bound
/// `k0 [(1 + delta |grad H|_inf) e^{2 delta |H|_inf} - 1] sqrt(K (e^{-2 C T} + eps))`
/// with `K` = [`ANNEAL_BOUND_CONSTANT`]. This has the shape of the annealing theorem with its
/// unnamed constant fixed; it is not a certified bound.
pub fn anneal_tv_bound(
    c_pi: f64,
    eps: f64,
    t: f64,
    delta: f64,
    beta0: f64,
    h_inf: f64,
    grad_h_inf: f64,
) -> Result<f64> {
    if [c_pi, eps, t, delta, beta0, h_inf, grad_h_inf].iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("annealing bound inputs must be nonnegative"));
    }
    if beta0 == 0.0 {
        return Ok(0.0);
    }
    if delta == 0.0 {
        return Err(invalid("delta must be positive when beta0 > 0"));
    }
    let k0 = integral_ratio(beta0, delta)? as f64;
    let stage = (1.0 + delta * grad_h_inf) * (2.0 * delta * h_inf).exp() - 1.0;
    let mix = (ANNEAL_BOUND_CONSTANT * ((-2.0 * c_pi * t).exp() + eps)).sqrt();
    Ok(k0 * stage * mix)
}

/// Empirical moments of a fixed-temperature Langevin chain.
#[derive(Clone, Debug)]
pub struct LangevinMoments {
    pub mean: Vec<f64>,
    /// `E sigma sigma^T - mean mean^T`.
    pub covariance: DMatrix<f64>,
    pub records: usize,
}

/// Runs Langevin at inverse temperature `beta` from `init`, discards `burn_in` steps, then
/// records the state every `thin` steps for `steps` further steps.
#[allow(clippy::too_many_arguments)]
pub fn langevin_moments<R: Rng + ?Sized>(
    h: &Hamiltonian,
    beta: f64,
    step: f64,
    init: SphereState,
    burn_in: usize,
    steps: usize,
    thin: usize,
    rng: &mut R,
) -> Result<LangevinMoments> {
    check_dim(h.dim(), init.dim())?;
    if thin == 0 || steps < thin {
        return Err(invalid("need thin >= 1 and at least one recorded state"));
    }
    let n = h.dim();
    let mut cur = init.into_vec();
    let mut ws = LangevinWorkspace::new(n);
    for _ in 0..burn_in {
        langevin_step_in_place(&mut cur, h, beta, step, rng, &mut ws)?;
    }
    let mut mean = vec![0.0; n];
    let mut second = DMatrix::<f64>::zeros(n, n);
    let mut records = 0usize;
    for k in 1..=steps {
        langevin_step_in_place(&mut cur, h, beta, step, rng, &mut ws)?;
        if k % thin == 0 {
            for j in 0..n {
                let cj = cur[j];
                mean[j] += cj;
                let col = second.column_mut(j);
                for (dst, ci) in col.into_iter().zip(&cur).skip(j) {
                    *dst += ci * cj;
                }
            }
            records += 1;
        }
    }
    let r = records as f64;
    mean.iter_mut().for_each(|v| *v /= r);
    let covariance = DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        second[(a, b)] / r - mean[i] * mean[j]
    });
    Ok(LangevinMoments { mean, covariance, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Hamiltonian {
        let m = MixtureFunction::from_pairs(&[(2, 0.1), (3, 0.05)]).unwrap();
        Hamiltonian::sample(&m, 8, 5).unwrap()
    }

    #[test]
    fn zero_noise_step_follows_drift() {
        let h = model();
        let sigma = SphereState::new((0..8).map(|i| 1.0 + i as f64 * 0.1).collect()).unwrap();
        let beta = 0.7;
        let want = h.gradient(sigma.coords(), crate::Frame::Spherical).unwrap();
        let step = 1e-7;
        let next = langevin_step_with_noise(&sigma, &h, beta, step, &[0.0; 8]).unwrap();
        for i in 0..8 {
            let fd = (next.coords()[i] - sigma.coords()[i]) / step;
            assert!((fd - beta * want[i]).abs() <= 1e-6 * (1.0 + want[i].abs()) * beta);
        }
    }

    #[test]
    fn output_on_sphere() {
        let h = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = SphereState::uniform(8, &mut rng);
        for _ in 0..100 {
            s = langevin_step(&s, &h, 1.0, 0.01, &mut rng).unwrap();
            assert!((dot(s.coords(), s.coords()) - 8.0).abs() < 1e-9 * 8.0);
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let s = AnnealSchedule::new(0.25, 1.0, 1.0, 0.1).unwrap();
        assert_eq!(s.stages(), 5);
        assert_eq!(s.total_steps(), 50);
        assert_eq!((0..5).map(|k| s.steps_in_stage(k)).sum::<usize>(), 50);
        assert!(AnnealSchedule::new(0.3, 1.0, 1.0, 0.1).is_err());
        assert!(AnnealSchedule::new(0.25, 0.01, 1.0, 0.1).is_err());
        let d = AnnealSchedule::with_defaults(40, 1.0, &MixtureFunction::pure(2, 0.1).unwrap()).unwrap();
        assert!((d.beta_max / d.delta - d.k0() as f64).abs() < 1e-9);
        assert!(d.delta <= 0.5 * 40f64.powf(-0.8));
    }

    #[test]
    fn zero_beta_is_one_stage() {
        let h = model();
        let s = AnnealSchedule::new(0.1, 0.5, 0.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, d) = run_annealed(&h, &s, &mut rng, &mut NoClock).unwrap();
        assert_eq!(d.stage_betas, vec![0.0]);
        assert_eq!(d.energy_per_spin.len(), 50);
    }

    #[test]
    fn one_bit_glauber() {
        let pi = DiscreteMeasure::uniform_cube(1).unwrap();
        let p = glauber_matrix(&pi).unwrap();
        assert_eq!(p[(0, 1)], 0.5);
        assert_eq!(p[(1, 0)], 0.5);
        let gadget = DiscreteMeasure::two_ball_gadget(4).unwrap();
        assert!(glauber_matrix(&gadget).is_err());
    }

    #[test]
    fn tv_bound_limits() {
        assert_eq!(anneal_tv_bound(1.0, 0.0, 1e6, 0.1, 1.0, 2.0, 3.0).unwrap(), 0.0);
        let single = anneal_tv_bound(0.5, 0.1, 2.0, 1.0, 1.0, 0.3, 0.2).unwrap();
        let by_hand = ((1.0 + 0.2) * (0.6f64).exp() - 1.0) * (20.0 * ((-2.0f64).exp() + 0.1)).sqrt();
        assert!((single - by_hand).abs() < 1e-14);
        assert!(anneal_tv_bound(0.5, 0.1, 2.0, 0.3, 1.0, 0.3, 0.2).is_err());
    }
}
