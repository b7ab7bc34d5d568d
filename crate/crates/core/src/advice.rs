//! Langevin sampling of well-separated Gaussian mixtures from data-based initializations.
//!
//! The law of the diffusion is tracked exactly on a grid: the generator is replaced by the
//! nearest-neighbor jump process with rates `h^{-2} sqrt(pi(y)/pi(x))`, which is reversible
//! for the gridded target and approximates `Delta + grad log pi . grad` to second order. The
//! jump process is applied by uniformization. Independent Langevin chains are run alongside
//! for a histogram diagnostic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Largest grid accepted by [`run_advice`].
pub const MAX_GRID_CELLS: usize = 2_000_000;

/// Isotropic Gaussian component `N(mean, sigma^2 I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

/// A finite mixture of isotropic Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureTarget {
    components: Vec<Component>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

impl MixtureTarget {
    /// Validates dimensions and positivity; weights must sum to 1 within `1e-12`.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let d = components.first().ok_or_else(|| invalid("mixture needs a component"))?.mean.len();
        if d == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        let mut total = 0.0;
        for c in &components {
            if c.mean.len() != d || !(c.sigma > 0.0) || !(c.weight > 0.0) {
                return Err(invalid("components need equal dimensions, sigma > 0 and weight > 0"));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    /// Two balanced unit Gaussians at `-s e_1` and `+s e_1` in dimension `d`.
    pub fn two_wells(d: usize, s: f64) -> Result<Self> {
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        if d > 0 {
            plus[0] = s;
            minus[0] = -s;
        }
        Self::new(vec![
            Component { weight: 0.5, mean: minus, sigma: 1.0 },
            Component { weight: 0.5, mean: plus, sigma: 1.0 },
        ])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Smallest weight `p_*`.
    pub fn p_star(&self) -> f64 {
        self.components.iter().map(|c| c.weight).fold(f64::INFINITY, f64::min)
    }

    /// Smallest component Poincare constant, `min 1/sigma_i^2`.
    pub fn pi_constant(&self) -> f64 {
        self.components.iter().map(|c| 1.0 / (c.sigma * c.sigma)).fold(f64::INFINITY, f64::min)
    }

    fn component_logs(&self, z: &[f64], out: &mut Vec<f64>) {
        let d = z.len() as f64;
        out.clear();
        for c in &self.components {
            let r2: f64 = z.iter().zip(&c.mean).map(|(a, b)| (a - b) * (a - b)).sum();
            let s2 = c.sigma * c.sigma;
            out.push(c.weight.ln() - 0.5 * r2 / s2 - 0.5 * d * (2.0 * core::f64::consts::PI * s2).ln());
        }
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let mut logs = Vec::with_capacity(self.components.len());
        self.component_logs(z, &mut logs);
        log_sum_exp(&logs)
    }

    /// `grad log pi(z)` written into `out`.
    pub fn grad_log_density(&self, z: &[f64], out: &mut [f64]) {
        let mut logs = Vec::with_capacity(self.components.len());
        self.component_logs(z, &mut logs);
        let total = log_sum_exp(&logs);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, l) in self.components.iter().zip(&logs) {
            let w = (l - total).exp() / (c.sigma * c.sigma);
            for k in 0..z.len() {
                out[k] += w * (c.mean[k] - z[k]);
            }
        }
    }

    /// One draw together with its component index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                idx = i;
                break;
            }
        }
        (idx, self.sample_component(idx, rng))
    }

    pub fn sample_component<R: Rng + ?Sized>(&self, idx: usize, rng: &mut R) -> Vec<f64> {
        let c = &self.components[idx];
        c.mean.iter().map(|m| m + c.sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn nearest(&self, z: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            let d: f64 = z.iter().zip(&c.mean).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// `ceil(constant log(1/delta) / (p_star eps^2))`.
pub fn sample_count(delta: f64, p_star: f64, eps: f64, constant: f64) -> Result<u64> {
    let ok = delta > 0.0 && delta < 1.0 && p_star > 0.0 && p_star <= 1.0 && eps > 0.0 && eps <= 1.0;
    if !ok || !(constant > 0.0) {
        return Err(invalid("sample_count needs delta in (0,1), p_star and eps in (0,1], constant > 0"));
    }
    let m = (constant * (1.0 / delta).ln() / (p_star * eps * eps)).ceil();
    // guard the integer conversion against floating noise right below an integer
    let near = m.round();
    let m = if (m - 1.0 - near).abs() < 1e-9 { near } else { m };
    Ok(m as u64)
}

/// Component counts of a sample under the nearest-mean rule.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightReport {
    pub counts: Vec<usize>,
    /// `sum_i p_i (n_i / (m p_i) - 1)^2`.
    pub imbalance: f64,
}

pub fn empirical_weights(samples: &[Vec<f64>], target: &MixtureTarget) -> Result<WeightReport> {
    if samples.is_empty() {
        return Err(invalid("empirical weights of an empty sample are undefined"));
    }
    let mut counts = vec![0usize; target.components.len()];
    for s in samples {
        counts[target.nearest(s)] += 1;
    }
    let m = samples.len() as f64;
    let imbalance = target
        .components
        .iter()
        .zip(&counts)
        .map(|(c, n)| {
            let r = *n as f64 / (m * c.weight) - 1.0;
            c.weight * r * r
        })
        .sum();
    Ok(WeightReport { counts, imbalance })
}

/// How the advice samples are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// i.i.d. draws from the target.
    Advice,
    /// Every draw from the given component.
    Adversarial(usize),
}

/// Grid and diagnostic settings for [`run_advice`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdviceOptions {
    /// Grid spacing; must be at most a third of the smallest component sigma.
    pub cell: f64,
    /// Grid half-width beyond the extreme means, in units of the largest sigma.
    pub margin: f64,
    /// Number of equally spaced checkpoints after time 0.
    pub checkpoints: usize,
    /// Histogram bins per axis for the chain diagnostic (0 disables the chains).
    pub hist_bins: usize,
}

impl Default for AdviceOptions {
    fn default() -> Self {
        Self { cell: 0.1, margin: 6.0, checkpoints: 10, hist_bins: 40 }
    }
}

/// Divergence trace from [`run_advice`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdviceTrace {
    pub times: Vec<f64>,
    /// Grid-exact total variation to the gridded target.
    pub tv: Vec<f64>,
    /// Grid-exact chi-square to the gridded target.
    pub chi2: Vec<f64>,
    /// Histogram total variation of the Langevin chains (empty when disabled).
    pub chain_tv: Vec<f64>,
    pub advice: WeightReport,
}

struct Grid {
    d: usize,
    lo: Vec<f64>,
    cells: Vec<usize>,
    h: f64,
    total: usize,
}

impl Grid {
    fn new(target: &MixtureTarget, opts: &AdviceOptions) -> Result<Self> {
        let d = target.dim();
        if d > 3 {
            return Err(invalid(format!("grid-exact divergences need d <= 3, got {d}")));
        }
        let smin = target.components.iter().map(|c| c.sigma).fold(f64::INFINITY, f64::min);
        let smax = target.components.iter().map(|c| c.sigma).fold(0.0, f64::max);
        if !(opts.cell > 0.0) || smin < 3.0 * opts.cell {
            return Err(Error::Domain(format!(
                "grid underresolved: sigma {smin} is less than 3 cells of width {}",
                opts.cell
            )));
        }
        let mut lo = vec![0.0; d];
        let mut cells = vec![0usize; d];
        let mut total = 1usize;
        for k in 0..d {
            let a = target.components.iter().map(|c| c.mean[k]).fold(f64::INFINITY, f64::min);
            let b = target.components.iter().map(|c| c.mean[k]).fold(f64::NEG_INFINITY, f64::max);
            lo[k] = a - opts.margin * smax;
            cells[k] = ((b - a + 2.0 * opts.margin * smax) / opts.cell).ceil() as usize + 1;
            total = total.saturating_mul(cells[k]);
        }
        if total > MAX_GRID_CELLS {
            return Err(invalid(format!("grid of {total} cells exceeds {MAX_GRID_CELLS}")));
        }
        Ok(Self { d, lo, cells, h: opts.cell, total })
    }

    fn center(&self, mut idx: usize, out: &mut [f64]) {
        for k in 0..self.d {
            out[k] = self.lo[k] + (idx % self.cells[k]) as f64 * self.h;
            idx /= self.cells[k];
        }
    }

    fn locate(&self, z: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.d {
            let i = ((z[k] - self.lo[k]) / self.h).round().clamp(0.0, (self.cells[k] - 1) as f64) as usize;
            idx += i * stride;
            stride *= self.cells[k];
        }
        idx
    }

    /// Neighbor indices of `idx` inside the grid.
    fn neighbors(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let mut stride = 1;
        let mut rest = idx;
        for k in 0..self.d {
            let i = rest % self.cells[k];
            rest /= self.cells[k];
            if i > 0 {
                out.push(idx - stride);
            }
            if i + 1 < self.cells[k] {
                out.push(idx + stride);
            }
            stride *= self.cells[k];
        }
    }
}

/// Reversible jump process on the grid, stored as neighbor lists with rates divided by the
/// uniformization constant.
struct Uniformized {
    nbr_start: Vec<usize>,
    nbr: Vec<usize>,
    // P(x -> y) for the listed neighbors
    prob: Vec<f64>,
    stay: Vec<f64>,
    lambda: f64,
}

impl Uniformized {
    fn new(grid: &Grid, log_pi: &[f64]) -> Self {
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let mut nbr_start = Vec::with_capacity(grid.total + 1);
        let mut nbr = Vec::new();
        let mut rate = Vec::new();
        let mut exit = vec![0.0; grid.total];
        let mut buf = Vec::new();
        for x in 0..grid.total {
            nbr_start.push(nbr.len());
            grid.neighbors(x, &mut buf);
            for &y in &buf {
                let r = inv_h2 * (0.5 * (log_pi[y] - log_pi[x])).exp();
                nbr.push(y);
                rate.push(r);
                exit[x] += r;
            }
        }
        nbr_start.push(nbr.len());
        let lambda = exit.iter().copied().fold(0.0, f64::max);
        let prob = rate.iter().map(|r| r / lambda).collect();
        let stay = exit.iter().map(|e| 1.0 - e / lambda).collect();
        Self { nbr_start, nbr, prob, stay, lambda }
    }

    /// `nu <- nu P`.
    fn step(&self, nu: &[f64], out: &mut [f64]) {
        for (o, (n, s)) in out.iter_mut().zip(nu.iter().zip(&self.stay)) {
            *o = n * s;
        }
        for x in 0..nu.len() {
            let mass = nu[x];
            if mass == 0.0 {
                continue;
            }
            for k in self.nbr_start[x]..self.nbr_start[x + 1] {
                out[self.nbr[k]] += mass * self.prob[k];
            }
        }
    }

    /// `nu <- nu exp(t Q)` by Poisson-weighted powers of `P`, in chunks of `lambda t <= 30`.
    fn evolve(&self, nu: &mut [f64], t: f64) {
        let chunks = (self.lambda * t / 30.0).ceil().max(1.0) as usize;
        let lt = self.lambda * t / chunks as f64;
        let mut cur = vec![0.0; nu.len()];
        let mut next = vec![0.0; nu.len()];
        let mut acc = vec![0.0; nu.len()];
        for _ in 0..chunks {
            cur.copy_from_slice(nu);
            let mut w = (-lt).exp();
            let mut covered = w;
            acc.iter_mut().zip(&cur).for_each(|(a, c)| *a = w * c);
            let kmax = (lt + 12.0 * lt.sqrt() + 40.0) as usize;
            for k in 1..=kmax {
                self.step(&cur, &mut next);
                core::mem::swap(&mut cur, &mut next);
                w *= lt / k as f64;
                covered += w;
                acc.iter_mut().zip(&cur).for_each(|(a, c)| *a += w * c);
                if 1.0 - covered < 1e-15 {
                    break;
                }
            }
            let total: f64 = acc.iter().sum();
            nu.iter_mut().zip(&acc).for_each(|(n, a)| *n = a / total);
        }
    }
}

fn tv_chi2(nu: &[f64], pi: &[f64]) -> (f64, f64) {
    let mut tv = 0.0;
    let mut chi = 0.0;
    for (a, b) in nu.iter().zip(pi) {
        tv += (a - b).abs();
        if *b > 0.0 {
            chi += a * a / b;
        }
    }
    (0.5 * tv, (chi - 1.0).max(0.0))
}

/// Draws `m` advice samples, evolves their empirical law under the gridded Langevin generator
/// up to time `t`, and reports divergences to the target at the checkpoints. Langevin chains
/// started at the advice samples use Euler-Maruyama with `step`.
pub fn run_advice<R: Rng + ?Sized>(
    target: &MixtureTarget,
    m: usize,
    t: f64,
    step: f64,
    rng: &mut R,
    init: InitMode,
    opts: &AdviceOptions,
) -> Result<AdviceTrace> {
    if m == 0 || !(t >= 0.0) || !(step > 0.0) || opts.checkpoints == 0 {
        return Err(invalid("run_advice needs m >= 1, T >= 0, step > 0 and checkpoints >= 1"));
    }
    if let InitMode::Adversarial(c) = init {
        if c >= target.components.len() {
            return Err(invalid(format!("component {c} does not exist")));
        }
    }
    let grid = Grid::new(target, opts)?;
    let d = grid.d;
    let mut z = vec![0.0; d];
    let log_pi: Vec<f64> = (0..grid.total)
        .map(|i| {
            grid.center(i, &mut z);
            target.log_density(&z)
        })
        .collect();
    let top = log_pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pi: Vec<f64> = log_pi.iter().map(|l| (l - top).exp()).collect();
    let zsum: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= zsum);

    let samples: Vec<Vec<f64>> = (0..m)
        .map(|_| match init {
            InitMode::Advice => target.sample(rng).1,
            InitMode::Adversarial(c) => target.sample_component(c, rng),
        })
        .collect();
    let advice = empirical_weights(&samples, target)?;
    let mut nu = vec![0.0; grid.total];
    for s in &samples {
        nu[grid.locate(s)] += 1.0 / m as f64;
    }

    let gen = Uniformized::new(&grid, &log_pi);
    let bins = opts.hist_bins;
    let hist_target = if bins > 0 { Some(histogram_target(&grid, &pi, bins)) } else { None };
    let mut chains = samples.clone();
    let mut grad = vec![0.0; d];

    let dt = t / opts.checkpoints as f64;
    let steps_per = if dt > 0.0 { (dt / step).round().max(1.0) as usize } else { 0 };
    let h_eff = if steps_per > 0 { dt / steps_per as f64 } else { 0.0 };
    let mut out = AdviceTrace { times: Vec::new(), tv: Vec::new(), chi2: Vec::new(), chain_tv: Vec::new(), advice };
    for j in 0..=opts.checkpoints {
        if j > 0 && dt > 0.0 {
            gen.evolve(&mut nu, dt);
            if bins > 0 {
                let amp = (2.0 * h_eff).sqrt();
                for c in chains.iter_mut() {
                    for _ in 0..steps_per {
                        target.grad_log_density(c, &mut grad);
                        for k in 0..d {
                            c[k] += h_eff * grad[k] + amp * rng.sample::<f64, _>(StandardNormal);
                        }
                    }
                }
            }
        }
        let (tv, chi2) = tv_chi2(&nu, &pi);
        out.times.push(dt * j as f64);
        out.tv.push(tv);
        out.chi2.push(chi2);
        if let Some((ref map, ref tgt)) = hist_target {
            let mut hist = vec![0.0; tgt.len()];
            for c in &chains {
                hist[map(&grid, c, bins)] += 1.0 / m as f64;
            }
            out.chain_tv.push(0.5 * hist.iter().zip(tgt).map(|(a, b)| (a - b).abs()).sum::<f64>());
        }
    }
    Ok(out)
}

type BinMap = fn(&Grid, &[f64], usize) -> usize;

fn bin_of(grid: &Grid, z: &[f64], bins: usize) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for k in 0..grid.d {
        let width = (grid.cells[k] - 1) as f64 * grid.h;
        let u = ((z[k] - grid.lo[k]) / width * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        idx += u * stride;
        stride *= bins;
    }
    idx
}

fn histogram_target(grid: &Grid, pi: &[f64], bins: usize) -> (BinMap, Vec<f64>) {
    let mut tgt = vec![0.0; bins.pow(grid.d as u32)];
    let mut z = vec![0.0; grid.d];
    for (i, p) in pi.iter().enumerate() {
        grid.center(i, &mut z);
        tgt[bin_of(grid, &z, bins)] += p;
    }
    (bin_of, tgt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_count_examples() {
        assert_eq!(sample_count((-1.0f64).exp(), 0.5, 1.0, 10.0).unwrap(), 20);
        let a = sample_count(0.1, 0.5, 0.5, 10.0).unwrap();
        let b = sample_count(0.1, 0.5, 0.25, 10.0).unwrap();
        assert!(b >= 4 * a - 4 && b <= 4 * a);
        assert_eq!(sample_count(0.1, 0.5, 0.25, 10.0).unwrap(), 737);
        assert!(sample_count(0.0, 0.5, 0.5, 10.0).is_err());
    }

    #[test]
    fn weights_of_single_component() {
        let t = MixtureTarget::new(vec![Component { weight: 1.0, mean: vec![0.0], sigma: 1.0 }]).unwrap();
        let r = empirical_weights(&[vec![1.0], vec![-3.0]], &t).unwrap();
        assert_eq!(r.counts, vec![2]);
        assert_eq!(r.imbalance, 0.0);
        assert!(empirical_weights(&[], &t).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = MixtureTarget::two_wells(2, 1.5).unwrap();
        let z = [0.3, -0.7];
        let mut g = [0.0; 2];
        t.grad_log_density(&z, &mut g);
        for k in 0..2 {
            let mut up = z;
            let mut dn = z;
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            let fd = (t.log_density(&up) - t.log_density(&dn)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn ou_chi2_relaxes_at_the_poincare_rate() {
        let t = MixtureTarget::new(vec![Component { weight: 1.0, mean: vec![0.0], sigma: 1.0 }]).unwrap();
        let opts = AdviceOptions { cell: 0.05, margin: 7.0, checkpoints: 8, hist_bins: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tr = run_advice(&t, 50, 2.0, 0.01, &mut rng, InitMode::Advice, &opts).unwrap();
        for j in 1..tr.times.len() {
            let bound = (-tr.times[j]).exp() * tr.chi2[0];
            assert!(tr.chi2[j] <= bound * 1.0001, "{} > {}", tr.chi2[j], bound);
            assert!(tr.chi2[j] <= tr.chi2[j - 1]);
        }
    }

    #[test]
    fn refuses_coarse_grid() {
        let t = MixtureTarget::two_wells(1, 10.0).unwrap();
        let opts = AdviceOptions { cell: 0.5, ..Default::default() };
        let r = run_advice(&t, 10, 1.0, 0.01, &mut ChaCha8Rng::seed_from_u64(1), InitMode::Advice, &opts);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
