//! Exact Dirichlet forms, spectral gaps, divergences and weak Poincare checks for Glauber
//! dynamics on small hypercubes, plus the inequality-transfer calculators.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;
use rand::Rng;

use crate::error::{check_dim, invalid, Error, Result};

/// Largest hypercube dimension for dense generator work.
pub const MAX_DENSE_BITS: usize = 14;

/// Where the atoms of a [`DiscreteMeasure`] live.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    /// All of `{-1,+1}^n`; atom `s` has `x_i = +1` iff bit `i` of `s` is set.
    Cube(usize),
    /// Labeled points in `R^dim`.
    Points { dim: usize, coords: Vec<Vec<f64>> },
}

/// A probability measure on finitely many atoms. Zero weights are allowed and mark atoms
/// outside the support.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    support: Support,
    weights: Vec<f64>,
}

fn normalize(mut w: Vec<f64>) -> Result<Vec<f64>> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("weights sum to zero"));
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

impl DiscreteMeasure {
    /// Measure on `{-1,+1}^n` from `2^n` nonnegative weights (normalized here).
    pub fn cube(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 || n > 30 {
            return Err(invalid(format!("cube dimension {n} out of range")));
        }
        check_dim(1 << n, weights.len())?;
        Ok(Self { support: Support::Cube(n), weights: normalize(weights)? })
    }

    pub fn uniform_cube(n: usize) -> Result<Self> {
        Self::cube(n, vec![1.0; 1usize << n.min(30)])
    }

    /// Product measure with `P(x_i = +1) = p_plus[i]`.
    pub fn product_cube(p_plus: &[f64]) -> Result<Self> {
        let n = p_plus.len();
        let w = (0..1usize << n)
            .map(|s| p_plus.iter().enumerate().map(|(i, p)| if s >> i & 1 == 1 { *p } else { 1.0 - p }).product())
            .collect();
        Self::cube(n, w)
    }

    /// Two Hamming balls of radius one around `+1` and `-1`, each of mass 1/2 and uniform
    /// inside. For `n >= 4` the balls share no single-flip edge.
    pub fn two_ball_gadget(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(invalid("the two-ball gadget needs n >= 4"));
        }
        let full = (1usize << n) - 1;
        let mut w = vec![0.0; 1 << n];
        let per = 0.5 / (n + 1) as f64;
        for s in 0..=full {
            let ones = s.count_ones() as usize;
            if ones + 1 >= n || ones <= 1 {
                w[s] = per;
            }
        }
        Self::cube(n, w)
    }

    /// Measure on distinct labeled points.
    pub fn points(coords: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        check_dim(coords.len(), weights.len())?;
        let dim = coords.first().map(|c| c.len()).unwrap_or(0);
        if coords.iter().any(|c| c.len() != dim) {
            return Err(invalid("all atoms need the same dimension"));
        }
        for i in 0..coords.len() {
            for j in 0..i {
                if coords[i] == coords[j] {
                    return Err(invalid(format!("atoms {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { support: Support::Points { dim, coords }, weights: normalize(weights)? })
    }

    /// Same atoms with new weights.
    pub fn reweighted(&self, weights: Vec<f64>) -> Result<Self> {
        check_dim(self.weights.len(), weights.len())?;
        Ok(Self { support: self.support.clone(), weights: normalize(weights)? })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Hypercube dimension, if the atoms are `{-1,+1}^n`.
    pub fn cube_bits(&self) -> Option<usize> {
        match self.support {
            Support::Cube(n) => Some(n),
            _ => None,
        }
    }

    /// Coordinate dimension of the atoms.
    pub fn dim(&self) -> usize {
        match &self.support {
            Support::Cube(n) => *n,
            Support::Points { dim, .. } => *dim,
        }
    }

    /// Coordinates of atom `k` written into `out`.
    pub fn atom_into(&self, k: usize, out: &mut [f64]) {
        match &self.support {
            Support::Cube(n) => {
                for i in 0..*n {
                    out[i] = if k >> i & 1 == 1 { 1.0 } else { -1.0 };
                }
            }
            Support::Points { coords, .. } => out.copy_from_slice(&coords[k]),
        }
    }

    pub fn atom(&self, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.atom_into(k, &mut v);
        v
    }

    /// Smallest positive weight.
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min)
    }

    pub fn expectation(&self, f: &[f64]) -> Result<f64> {
        check_dim(self.len(), f.len())?;
        Ok(self.weights.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    pub fn variance(&self, f: &[f64]) -> Result<f64> {
        let m = self.expectation(f)?;
        Ok(self.weights.iter().zip(f).map(|(w, v)| w * (v - m) * (v - m)).sum())
    }

    /// Mean of the atom coordinates.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        let mut x = vec![0.0; d];
        for (k, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            self.atom_into(k, &mut x);
            m.iter_mut().zip(&x).for_each(|(a, b)| *a += w * b);
        }
        m
    }

    /// Covariance matrix of the atom coordinates.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let m = self.mean();
        let mut c = DMatrix::zeros(d, d);
        let mut x = vec![0.0; d];
        for (k, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            self.atom_into(k, &mut x);
            for i in 0..d {
                let di = x[i] - m[i];
                for j in 0..d {
                    c[(i, j)] += w * di * (x[j] - m[j]);
                }
            }
        }
        c
    }

    /// Oscillation `max f - min f` over the support.
    pub fn osc(&self, f: &[f64]) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (w, v) in self.weights.iter().zip(f) {
            if *w > 0.0 {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }

    fn require_cube(&self, max_bits: usize) -> Result<usize> {
        match self.support {
            Support::Cube(n) if n <= max_bits => Ok(n),
            Support::Cube(n) => Err(invalid(format!("n = {n} exceeds the dense limit {max_bits}"))),
            _ => Err(invalid("operation needs a measure on the hypercube")),
        }
    }
}

/// Glauber Dirichlet form
/// `(1/n) sum_{x~y} pi(x)pi(y)/(pi(x)+pi(y)) (f(x)-f(y))^2` over unordered neighbor pairs.
pub fn dirichlet_glauber(pi: &DiscreteMeasure, f: &[f64]) -> Result<f64> {
    let n = pi.require_cube(20)?;
    check_dim(pi.len(), f.len())?;
    let w = pi.weights();
    let mut acc = 0.0;
    for x in 0..w.len() {
        for i in 0..n {
            let y = x ^ (1 << i);
            if y < x {
                continue;
            }
            let s = w[x] + w[y];
            if s == 0.0 {
                continue;
            }
            let d = f[x] - f[y];
            acc += w[x] * w[y] / s * d * d;
        }
    }
    Ok(acc / n as f64)
}

/// Single-site Glauber kernel restricted to the support (rows of null atoms are identity).
pub(crate) fn glauber_kernel(pi: &DiscreteMeasure) -> Result<DMatrix<f64>> {
    let n = pi.require_cube(12)?;
    let w = pi.weights();
    let size = w.len();
    let mut p = DMatrix::zeros(size, size);
    for x in 0..size {
        if w[x] == 0.0 {
            p[(x, x)] = 1.0;
            continue;
        }
        let mut out = 0.0;
        for i in 0..n {
            let y = x ^ (1 << i);
            let q = w[y] / (w[x] + w[y]) / n as f64;
            p[(x, y)] = q;
            out += q;
        }
        p[(x, x)] = 1.0 - out;
    }
    Ok(p)
}

/// Eigen-decomposition of `I - P` on the support, in the `pi`-weighted inner product.
#[derive(Clone, Debug)]
pub struct GeneratorSpectrum {
    /// Atom indices of the support.
    pub support: Vec<usize>,
    /// Ascending eigenvalues of `I - P`.
    pub eigenvalues: Vec<f64>,
    /// `pi`-orthonormal eigenfunctions, as values on `support`.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Whether the support is connected under single flips.
    pub connected: bool,
}

pub fn generator_spectrum(pi: &DiscreteMeasure) -> Result<GeneratorSpectrum> {
    let n = pi.require_cube(MAX_DENSE_BITS)?;
    let w = pi.weights();
    let support: Vec<usize> = (0..w.len()).filter(|&x| w[x] > 0.0).collect();
    let mut pos = vec![usize::MAX; w.len()];
    for (a, &x) in support.iter().enumerate() {
        pos[x] = a;
    }
    let m = support.len();
    let mut l = DMatrix::<f64>::zeros(m, m);
    for (a, &x) in support.iter().enumerate() {
        let mut out = 0.0;
        for i in 0..n {
            let y = x ^ (1 << i);
            if w[y] == 0.0 {
                continue;
            }
            let rate = w[y] / (w[x] + w[y]) / n as f64;
            out += rate;
            // sqrt(pi_x / pi_y) * P(x, y)
            l[(a, pos[y])] = -(w[x] / w[y]).sqrt() * rate;
        }
        l[(a, a)] = out;
    }
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let eigenfunctions =
        order.iter().map(|&k| (0..m).map(|a| eig.eigenvectors[(a, k)] / w[support[a]].sqrt()).collect()).collect();
    let connected = is_connected(&support, &pos, n);
    Ok(GeneratorSpectrum { support, eigenvalues, eigenfunctions, connected })
}

fn is_connected(support: &[usize], pos: &[usize], n: usize) -> bool {
    if support.is_empty() {
        return true;
    }
    let mut seen = vec![false; support.len()];
    let mut stack = vec![support[0]];
    seen[0] = true;
    let mut count = 1;
    while let Some(x) = stack.pop() {
        for i in 0..n {
            let y = x ^ (1 << i);
            let a = pos[y];
            if a != usize::MAX && !seen[a] {
                seen[a] = true;
                count += 1;
                stack.push(y);
            }
        }
    }
    count == support.len()
}

/// Spectral gap of the Glauber generator; 0 when the support is disconnected under single
/// flips, infinite for a point mass.
pub fn spectral_gap(pi: &DiscreteMeasure) -> Result<f64> {
    let spec = generator_spectrum(pi)?;
    if spec.support.len() < 2 {
        return Ok(f64::INFINITY);
    }
    if !spec.connected {
        return Ok(0.0);
    }
    Ok(spec.eigenvalues[1])
}

/// A weak Poincare pair `Var f <= E(f,f)/c + eps osc(f)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakPI {
    pub c: f64,
    pub eps: f64,
}

impl WeakPI {
    pub fn new(c: f64, eps: f64) -> Result<Self> {
        if !(c >= 0.0) || !(eps >= 0.0) {
            return Err(invalid(format!("weak PI needs c >= 0 and eps >= 0, got ({c}, {eps})")));
        }
        Ok(Self { c, eps })
    }

    /// Right-hand side for the given Dirichlet energy and oscillation.
    pub fn rhs(&self, dirichlet: f64, osc: f64) -> f64 {
        let energy_term = if dirichlet <= 0.0 {
            0.0
        } else if self.c == 0.0 {
            f64::INFINITY
        } else {
            dirichlet / self.c
        };
        energy_term + self.eps * osc * osc
    }
}

/// Result of [`weak_pi_probe`].
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    /// `witness` (a full function table) violates the inequality.
    Refuted { witness: Vec<f64>, variance: f64, dirichlet: f64, osc: f64 },
    /// No tested function violates it; this certifies nothing.
    Unrefuted { functions_checked: usize },
}

impl Verdict {
    pub fn is_refuted(&self) -> bool {
        matches!(self, Verdict::Refuted { .. })
    }
}

/// Tests the weak Poincare inequality on every generator eigenfunction, every single-atom
/// indicator and `trials` random functions.
pub fn weak_pi_probe<R: Rng + ?Sized>(pi: &DiscreteMeasure, w: WeakPI, trials: usize, rng: &mut R) -> Result<Verdict> {
    let spec = generator_spectrum(pi)?;
    let size = pi.len();
    let mut checked = 0;
    let mut table = vec![0.0; size];
    let check = |table: &[f64]| -> Result<Option<Verdict>> {
        let var = pi.variance(table)?;
        let e = dirichlet_glauber(pi, table)?;
        let osc = pi.osc(table);
        let rhs = w.rhs(e, osc);
        let amp = table.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if var > rhs + 1e-12 * (var.abs() + osc * osc + amp * amp) {
            return Ok(Some(Verdict::Refuted { witness: table.to_vec(), variance: var, dirichlet: e, osc }));
        }
        Ok(None)
    };
    for ef in &spec.eigenfunctions {
        table.iter_mut().for_each(|v| *v = 0.0);
        for (a, &x) in spec.support.iter().enumerate() {
            table[x] = ef[a];
        }
        checked += 1;
        if let Some(v) = check(&table)? {
            return Ok(v);
        }
    }
    for &x in &spec.support {
        table.iter_mut().for_each(|v| *v = 0.0);
        table[x] = 1.0;
        checked += 1;
        if let Some(v) = check(&table)? {
            return Ok(v);
        }
    }
    for k in 0..trials {
        for v in table.iter_mut() {
            *v = if k % 2 == 0 {
                rng.random_range(-1.0..1.0)
            } else if rng.random_bool(0.5) {
                1.0
            } else {
                0.0
            };
        }
        checked += 1;
        if let Some(v) = check(&table)? {
            return Ok(v);
        }
    }
    Ok(Verdict::Unrefuted { functions_checked: checked })
}

/// Total variation, chi-square and KL divergence of `nu` from `pi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergences {
    pub tv: f64,
    pub chi2: f64,
    pub kl: f64,
}

/// Exact divergences; `chi2` and `kl` are infinite when `nu` charges a `pi`-null atom.
pub fn divergences(nu: &DiscreteMeasure, pi: &DiscreteMeasure) -> Result<Divergences> {
    check_dim(pi.len(), nu.len())?;
    let mut tv = 0.0;
    let mut chi2 = 0.0;
    let mut kl = 0.0;
    let mut outside = false;
    for (a, b) in nu.weights().iter().zip(pi.weights()) {
        tv += (a - b).abs();
        if *b == 0.0 {
            outside |= *a > 0.0;
            continue;
        }
        chi2 += a * a / b;
        if *a > 0.0 {
            kl += a * (a / b).ln();
        }
    }
    if outside {
        chi2 = f64::INFINITY;
        kl = f64::INFINITY;
    } else {
        chi2 = (chi2 - 1.0).max(0.0);
        kl = kl.max(0.0);
    }
    Ok(Divergences { tv: 0.5 * tv, chi2, kl })
}

/// `chi^2(nu_t || pi)` at `t = k T / grid`, `k = 0..=grid`, under the continuous-time Glauber
/// semigroup `exp(-t (I - P))`.
pub fn chi2_trajectory(
    pi: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    t_max: f64,
    grid: usize,
) -> Result<Vec<(f64, f64)>> {
    pi.require_cube(12)?;
    check_dim(pi.len(), nu0.len())?;
    if grid == 0 || !(t_max >= 0.0) {
        return Err(invalid("chi2 trajectory needs grid >= 1 and T >= 0"));
    }
    let spec = generator_spectrum(pi)?;
    let w = pi.weights();
    if nu0.weights().iter().zip(w).any(|(a, b)| *a > 0.0 && *b == 0.0) {
        return Err(invalid("nu0 charges atoms outside the support of pi"));
    }
    // coefficients of h0 - 1 in the eigenbasis, with h0 = d nu0 / d pi
    let coeffs: Vec<f64> = spec
        .eigenfunctions
        .iter()
        .map(|ef| spec.support.iter().enumerate().map(|(a, &x)| (nu0.weights()[x] - w[x]) * ef[a]).sum())
        .collect();
    Ok((0..=grid)
        .map(|k| {
            let t = t_max * k as f64 / grid as f64;
            let chi2 = spec.eigenvalues.iter().zip(&coeffs).map(|(l, c)| (-2.0 * l * t).exp() * c * c).sum::<f64>();
            (t, chi2)
        })
        .collect())
}

/// Which divergence a mixing bound controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    Chi2,
    Kl,
}

/// `exp(-2cT) chi2_0 + eps` or `exp(-cT) KL_0 + eps`.
pub fn mixing_bound(w: WeakPI, d0: f64, t: f64, mode: BoundMode) -> f64 {
    match mode {
        BoundMode::Chi2 => (-2.0 * w.c * t).exp() * d0 + w.eps,
        BoundMode::Kl => (-w.c * t).exp() * d0 + w.eps,
    }
}

/// Inputs of the inequality-transfer calculators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transfer {
    /// Measure decomposition with variance-conservation constant `c_var`, components
    /// `(c_pi, delta)`-weak with probability `1 - eta`.
    Decomposition { c_pi: f64, c_var: f64, delta: f64, eta: f64 },
    /// Langevin: TV perturbation of size `delta` of a `c_pi`-Poincare measure.
    PerturbLangevin { c_pi: f64, delta: f64 },
    /// Glauber: TV perturbation of size `delta` of a `c_pi`-Poincare measure.
    PerturbGlauber { c_pi: f64, delta: f64 },
    /// Stopped localization with horizon `t`, covariance cap `k`.
    StoppedScheme { c_pi: f64, delta: f64, eta1: f64, eta2: f64, t: f64, k: f64 },
    /// Weak Poincare to weak MLSI and LSI on a finite space with smallest atom `pi_min`.
    PiToMlsi { c_pi: f64, eps: f64, pi_min: f64 },
}

/// Output of [`transfer`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransferOutput {
    WeakPi(WeakPI),
    /// Weak MLSI and weak LSI pairs `(constant, eps)`.
    Mlsi {
        mlsi: WeakPI,
        lsi: WeakPI,
    },
}

impl TransferOutput {
    pub fn weak_pi(&self) -> Option<WeakPI> {
        match self {
            TransferOutput::WeakPi(w) => Some(*w),
            _ => None,
        }
    }
}

fn nonneg(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| *v >= 0.0) {
        Ok(())
    } else {
        Err(invalid("transfer inputs must be nonnegative"))
    }
}

/// `C_pi = (1 - 2 pi_min) / log(1/pi_min - 1)`, extended by continuity (value 1/2) at 1/2.
pub fn complete_graph_lsi(pi_min: f64) -> Result<f64> {
    if !(pi_min > 0.0 && pi_min <= 0.5) {
        return Err(invalid(format!("pi_min must lie in (0, 1/2], got {pi_min}")));
    }
    let u = 0.5 - pi_min;
    if u < 1e-4 {
        // (2u) / log((1/2+u)/(1/2-u)) = 1/2 - (2/3)u^2 - ...
        return Ok(0.5 - 2.0 / 3.0 * u * u - 8.0 / 45.0 * u.powi(4));
    }
    Ok((1.0 - 2.0 * pi_min) / (1.0 / pi_min - 1.0).ln())
}

pub fn transfer(kind: Transfer) -> Result<TransferOutput> {
    let out = match kind {
        Transfer::Decomposition { c_pi, c_var, delta, eta } => {
            nonneg(&[c_pi, c_var, delta, eta])?;
            if c_var == 0.0 {
                return Err(Error::Singular("variance-conservation constant is zero".into()));
            }
            WeakPI::new(c_pi * c_var, (delta + eta) / c_var)?
        }
        Transfer::PerturbLangevin { c_pi, delta } => {
            nonneg(&[c_pi, delta])?;
            let inv = if c_pi == 0.0 { f64::INFINITY } else { 1.0 / c_pi };
            WeakPI::new(c_pi, delta * inv.max(1.0))?
        }
        Transfer::PerturbGlauber { c_pi, delta } => {
            nonneg(&[c_pi, delta])?;
            if c_pi == 0.0 {
                return Err(Error::Singular("Poincare constant is zero".into()));
            }
            WeakPI::new(c_pi, delta * (1.0 + c_pi) / c_pi)?
        }
        Transfer::StoppedScheme { c_pi, delta, eta1, eta2, t, k } => {
            nonneg(&[c_pi, delta, eta1, eta2, t, k])?;
            let decay = (-t * k).exp();
            WeakPI::new(c_pi * decay, (delta + eta1 + eta2) / decay)?
        }
        Transfer::PiToMlsi { c_pi, eps, pi_min } => {
            nonneg(&[c_pi, eps])?;
            let cp = complete_graph_lsi(pi_min)?;
            return Ok(TransferOutput::Mlsi {
                mlsi: WeakPI::new(4.0 * c_pi * cp, eps / cp)?,
                lsi: WeakPI::new(c_pi * cp, eps / cp)?,
            });
        }
    };
    Ok(TransferOutput::WeakPi(out))
}

/// The headline Glauber perturbation pair `(c_pi, 2 delta)` and whether it is implied by the
/// derived pair `(c_pi, delta (1 + c_pi) / c_pi)`, which holds exactly when `c_pi >= 1`.
pub fn perturb_glauber_headline(c_pi: f64, delta: f64) -> Result<(WeakPI, bool)> {
    nonneg(&[c_pi, delta])?;
    Ok((WeakPI::new(c_pi, 2.0 * delta)?, c_pi >= 1.0))
}

/// Largest `C_var` with `E_rho Var_{pi_z} f >= C_var Var_pi f` for all `f`, where
/// `pi = sum_z rho_z pi_z`. Uses the law of total variance and one symmetric eigensolve.
pub fn variance_conservation_constant(parts: &[(f64, DiscreteMeasure)]) -> Result<f64> {
    let first = parts.first().ok_or_else(|| invalid("empty decomposition"))?;
    let size = first.1.len();
    let total: f64 = parts.iter().map(|(r, _)| r).sum();
    if parts.iter().any(|(r, m)| *r < 0.0 || m.len() != size) || !(total > 0.0) {
        return Err(invalid("decomposition weights must be nonnegative on a shared atom set"));
    }
    let mut pi = vec![0.0; size];
    for (r, m) in parts {
        pi.iter_mut().zip(m.weights()).for_each(|(p, w)| *p += r / total * w);
    }
    let support: Vec<usize> = (0..size).filter(|&x| pi[x] > 0.0).collect();
    let k = support.len();
    let mut q = DMatrix::<f64>::zeros(k, k);
    for (r, m) in parts {
        let d: Vec<f64> = support.iter().map(|&x| (m.weights()[x] - pi[x]) / pi[x].sqrt()).collect();
        for a in 0..k {
            for b in 0..k {
                q[(a, b)] += r / total * d[a] * d[b];
            }
        }
    }
    let top = SymmetricEigen::new(q).eigenvalues.iter().copied().fold(0.0, f64::max);
    Ok((1.0 - top).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_bit_uniform() {
        let pi = DiscreteMeasure::uniform_cube(1).unwrap();
        assert_eq!(dirichlet_glauber(&pi, &[-1.0, 1.0]).unwrap(), 1.0);
        assert!((spectral_gap(&pi).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(dirichlet_glauber(&pi, &[3.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn product_gap_is_one_over_n() {
        for n in 1..=5 {
            let pi = DiscreteMeasure::uniform_cube(n).unwrap();
            assert!((spectral_gap(&pi).unwrap() - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn gadget_is_disconnected() {
        let pi = DiscreteMeasure::two_ball_gadget(5).unwrap();
        assert_eq!(spectral_gap(&pi).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = weak_pi_probe(&pi, WeakPI::new(0.5, 0.0).unwrap(), 20, &mut rng).unwrap();
        assert!(v.is_refuted());
        let v = weak_pi_probe(&pi, WeakPI::new(1e-3, 0.25 + 1e-6).unwrap(), 200, &mut rng).unwrap();
        assert!(!v.is_refuted(), "{v:?}");
    }

    #[test]
    fn two_atom_divergences() {
        let pi = DiscreteMeasure::cube(1, vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::cube(1, vec![0.75, 0.25]).unwrap();
        let d = divergences(&nu, &pi).unwrap();
        assert!((d.tv - 0.25).abs() < 1e-15);
        assert!((d.chi2 - 0.25).abs() < 1e-15);
        let same = divergences(&pi, &pi).unwrap();
        assert_eq!((same.tv, same.chi2, same.kl), (0.0, 0.0, 0.0));
        let a = DiscreteMeasure::cube(1, vec![1.0, 0.0]).unwrap();
        let b = DiscreteMeasure::cube(1, vec![0.0, 1.0]).unwrap();
        let d = divergences(&a, &b).unwrap();
        assert_eq!(d.tv, 1.0);
        assert!(d.chi2.is_infinite());
    }

    #[test]
    fn transfer_identities() {
        let w = transfer(Transfer::Decomposition { c_pi: 2.0, c_var: 1.0, delta: 0.1, eta: 0.0 })
            .unwrap()
            .weak_pi()
            .unwrap();
        assert_eq!((w.c, w.eps), (2.0, 0.1));
        let s = transfer(Transfer::StoppedScheme { c_pi: 2.0, delta: 0.1, eta1: 0.2, eta2: 0.3, t: 0.0, k: 5.0 })
            .unwrap()
            .weak_pi()
            .unwrap();
        assert_eq!(s.c, 2.0);
        assert!((s.eps - 0.6).abs() < 1e-15);
        let g = transfer(Transfer::PerturbGlauber { c_pi: 0.5, delta: 0.1 }).unwrap().weak_pi().unwrap();
        assert!((g.eps - 0.3).abs() < 1e-15);
        assert!(!perturb_glauber_headline(0.5, 0.1).unwrap().1);
        assert!(transfer(Transfer::Decomposition { c_pi: 1.0, c_var: 0.0, delta: 0.0, eta: 0.0 }).is_err());
    }

    #[test]
    fn complete_graph_constant_limit() {
        let series = complete_graph_lsi(0.5).unwrap();
        assert!((series - 0.5).abs() < 1e-15);
        let near = complete_graph_lsi(0.5 - 2e-4).unwrap();
        let direct = (1.0 - 2.0 * (0.5 - 2e-4)) / (1.0 / (0.5 - 2e-4) - 1.0f64).ln();
        assert!((near - direct).abs() < 1e-10);
    }

    #[test]
    fn variance_constant_of_trivial_decomposition_is_one() {
        let pi = DiscreteMeasure::product_cube(&[0.3, 0.6]).unwrap();
        let c = variance_conservation_constant(&[(1.0, pi.clone())]).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        // full localization onto atoms conserves nothing
        let atoms: Vec<(f64, DiscreteMeasure)> = (0..4)
            .map(|k| {
                let mut w = vec![0.0; 4];
                w[k] = 1.0;
                (pi.weights()[k], DiscreteMeasure::cube(2, w).unwrap())
            })
            .collect();
        assert!(variance_conservation_constant(&atoms).unwrap() < 1e-12);
    }
}
