//! Seeded Gaussian disorder for the spherical mixed p-spin model, with energy, gradient and
//! Hessian evaluation, overlaps and planted spikes.
//!
//! Disorder is drawn per ordered index tuple, `g_{i1..ip}` i.i.d. standard normal, from a
//! counter-based ChaCha stream keyed by `(seed, p, flat index)`. For evaluation the tensor is
//! replaced by its symmetrization, which leaves every energy unchanged.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)] // inherent when std is linked into the build
use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, Error, Result};
use crate::mixture::MixtureFunction;

/// Default cap on `sum_p N^p` stored disorder entries.
pub const DEFAULT_CAP: u128 = 100_000_000;

/// A point on the sphere of radius `sqrt(N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereState {
    coords: Vec<f64>,
}

impl SphereState {
    /// Rescales `coords` onto the sphere `|sigma|^2 = N`.
    pub fn new(mut coords: Vec<f64>) -> Result<Self> {
        let n = coords.len();
        let norm2 = dot(&coords, &coords);
        if n == 0 || !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(invalid("sphere state needs a nonzero finite vector"));
        }
        let scale = (n as f64 / norm2).sqrt();
        coords.iter_mut().for_each(|c| *c *= scale);
        Ok(Self { coords })
    }

    /// Uniform draw from the sphere.
    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(s) = Self::new(v) {
                return s;
            }
        }
    }

    /// `sqrt(N) e_k`.
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(invalid(format!("basis index {k} out of range for N = {n}")));
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }
}

impl AsRef<[f64]> for SphereState {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Overlap `R(a, b) = <a, b> / N`.
pub fn overlap(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    if a.is_empty() {
        return Err(invalid("overlap of empty vectors"));
    }
    Ok(dot(a, b) / a.len() as f64)
}

/// Coordinate frame of a gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Euclidean,
    /// Projected onto the tangent space at the evaluation point.
    Spherical,
}

/// One standard normal from the disorder stream of degree `p` at flat index `idx`.
pub fn disorder_entry(seed: u64, p: usize, idx: u64) -> f64 {
    let mut rng = stream(seed, p);
    rng.set_word_pos(4 * idx as u128);
    box_muller(&mut rng)
}

/// The full unsymmetrized tensor of degree `p` (row-major, first index slowest).
pub fn raw_disorder(seed: u64, p: usize, n: usize) -> Vec<f64> {
    let len = n.pow(p as u32);
    let mut rng = stream(seed, p);
    (0..len).map(|_| box_muller(&mut rng)).collect()
}

fn stream(seed: u64, p: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    rng
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
}

#[derive(Clone, Debug)]
struct Term {
    p: usize,
    // symmetrized tensor with the factor gamma_p / N^{(p-1)/2} folded in
    sym: Vec<f64>,
    // p = 3 only: sum over i <= j <= k of sym times the orbit size
    packed: Vec<f64>,
}

/// Planted spike `N xi_s(R(x, sigma))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spike {
    pub x: Vec<f64>,
    pub mixture: MixtureFunction,
}

/// Spherical mixed p-spin Hamiltonian with optional field and spike.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    mixture: MixtureFunction,
    n: usize,
    seed: u64,
    terms: Vec<Term>,
    field: Option<Vec<f64>>,
    spike: Option<Spike>,
}

impl Hamiltonian {
    /// Samples disorder for `m` at dimension `n` under the default memory cap.
    ///
    /// The degree-one part has variance `gamma_1^2 + t`, so the covariance is `N xi_t(R)`.
    pub fn sample(m: &MixtureFunction, n: usize, seed: u64) -> Result<Self> {
        Self::sample_with_cap(m, n, seed, DEFAULT_CAP)
    }

    pub fn sample_with_cap(m: &MixtureFunction, n: usize, seed: u64, cap: u128) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dimension N must be >= 1"));
        }
        let mut total: u128 = 0;
        for p in 1..=m.degree() {
            let c = if p == 1 { m.linear_variance() } else { m.gamma_sq(p) };
            if c == 0.0 {
                continue;
            }
            let entries = (n as u128).checked_pow(p as u32).unwrap_or(u128::MAX);
            total = total.saturating_add(entries);
            if total > cap {
                return Err(Error::Capacity { p, entries, cap });
            }
        }
        let mut terms = Vec::new();
        for p in 1..=m.degree() {
            let c = if p == 1 { m.linear_variance() } else { m.gamma_sq(p) };
            if c == 0.0 {
                continue;
            }
            let scale = c.sqrt() / (n as f64).powf((p as f64 - 1.0) / 2.0);
            let raw = raw_disorder(seed, p, n);
            let mut sym = symmetrize(&raw, n, p);
            sym.iter_mut().for_each(|v| *v *= scale);
            let packed = if p == 3 { pack3(&sym, n) } else { Vec::new() };
            terms.push(Term { p, sym, packed });
        }
        Ok(Self { mixture: m.clone(), n, seed, terms, field: None, spike: None })
    }

    /// A Hamiltonian carrying the mixture `m` but no disorder.
    pub fn without_disorder(m: &MixtureFunction, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dimension N must be >= 1"));
        }
        Ok(Self { mixture: m.clone(), n, seed: 0, terms: Vec::new(), field: None, spike: None })
    }

    /// Adds the spike `N xi_s(R(x, sigma))`.
    pub fn plant(mut self, x: &SphereState, spike_mixture: &MixtureFunction) -> Result<Self> {
        check_dim(self.n, x.dim())?;
        if self.spike.is_some() {
            return Err(invalid("Hamiltonian is already planted"));
        }
        if !spike_mixture.is_zero() {
            self.spike = Some(Spike { x: x.coords().to_vec(), mixture: spike_mixture.clone() });
        }
        Ok(self)
    }

    /// Adds (or accumulates into) the explicit field `<y, sigma>`.
    pub fn with_field(mut self, y: &[f64]) -> Result<Self> {
        check_dim(self.n, y.len())?;
        match &mut self.field {
            Some(f) => f.iter_mut().zip(y).for_each(|(a, b)| *a += b),
            None => self.field = Some(y.to_vec()),
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mixture(&self) -> &MixtureFunction {
        &self.mixture
    }

    pub fn spike(&self) -> Option<&Spike> {
        self.spike.as_ref()
    }

    pub fn field(&self) -> Option<&[f64]> {
        self.field.as_deref()
    }

    /// Degrees with stored disorder.
    pub fn degrees(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.p).collect()
    }

    /// Energy at any point of `R^N`.
    pub fn energy(&self, sigma: &[f64]) -> Result<f64> {
        check_dim(self.n, sigma.len())?;
        Ok(self.energy_unchecked(sigma))
    }

    /// Energy without the dimension check.
    pub fn energy_unchecked(&self, s: &[f64]) -> f64 {
        let n = self.n;
        let mut e = 0.0;
        for t in &self.terms {
            e += match t.p {
                1 => dot(&t.sym, s),
                2 => quad_form(&t.sym, s, n),
                3 => cubic_packed(&t.packed, s, n),
                _ => full_contract(&t.sym, s, n),
            };
        }
        if let Some(y) = &self.field {
            e += dot(y, s);
        }
        if let Some(sp) = &self.spike {
            e += n as f64 * sp.mixture.value(dot(&sp.x, s) / n as f64);
        }
        e
    }

    /// Euclidean or spherical gradient.
    pub fn gradient(&self, sigma: &[f64], frame: Frame) -> Result<Vec<f64>> {
        check_dim(self.n, sigma.len())?;
        let mut g = vec![0.0; self.n];
        self.gradient_into(sigma, &mut g);
        if frame == Frame::Spherical {
            project_tangent(sigma, &mut g);
        }
        Ok(g)
    }

    /// Euclidean gradient written into `out` (no dimension checks).
    pub fn gradient_into(&self, s: &[f64], out: &mut [f64]) {
        self.gradient_energy_into(s, out);
    }

    /// Euclidean gradient written into `out`; returns the energy at `s` as a by-product
    /// (each homogeneous degree-p term satisfies `<s, grad H_p(s)> = p H_p(s)`).
    pub fn gradient_energy_into(&self, s: &[f64], out: &mut [f64]) -> f64 {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut energy = 0.0;
        let mut before = 0.0;
        for t in &self.terms {
            match t.p {
                1 => out.iter_mut().zip(&t.sym).for_each(|(o, g)| *o += g),
                2 => {
                    for i in 0..n {
                        out[i] += 2.0 * dot(&t.sym[i * n..(i + 1) * n], s);
                    }
                }
                3 => cubic_packed_grad(&t.packed, s, n, out),
                p => {
                    let mut v = t.sym.clone();
                    for _ in 0..p - 1 {
                        v = contract_last(&v, s, n);
                    }
                    out.iter_mut().zip(&v).for_each(|(o, g)| *o += p as f64 * g);
                }
            }
            let after = dot(out, s);
            energy += (after - before) / t.p as f64;
            before = after;
        }
        if let Some(y) = &self.field {
            out.iter_mut().zip(y).for_each(|(o, g)| *o += g);
            energy += dot(y, s);
        }
        if let Some(sp) = &self.spike {
            let r = dot(&sp.x, s) / n as f64;
            let d = sp.mixture.deriv(r, 1);
            out.iter_mut().zip(&sp.x).for_each(|(o, x)| *o += d * x);
            energy += n as f64 * sp.mixture.value(r);
        }
        energy
    }

    /// Euclidean Hessian at `sigma`.
    pub fn hessian(&self, sigma: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.n, sigma.len())?;
        let n = self.n;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for t in &self.terms {
            if t.p < 2 {
                continue;
            }
            let mut v = t.sym.clone();
            for _ in 0..t.p - 2 {
                v = contract_last(&v, sigma, n);
            }
            let c = (t.p * (t.p - 1)) as f64;
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += c * v[i * n + j];
                }
            }
        }
        if let Some(sp) = &self.spike {
            let d2 = sp.mixture.deriv(dot(&sp.x, sigma) / n as f64, 2) / n as f64;
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += d2 * sp.x[i] * sp.x[j];
                }
            }
        }
        Ok(h)
    }

    /// `grad^2 H(0) = (gamma_2 / sqrt N)(G + G^T)` from the disorder alone.
    pub fn hessian_origin(&self) -> DMatrix<f64> {
        let n = self.n;
        match self.terms.iter().find(|t| t.p == 2) {
            Some(t) => DMatrix::from_fn(n, n, |i, j| 2.0 * t.sym[i * n + j]),
            None => DMatrix::zeros(n, n),
        }
    }
}

/// `(I - sigma sigma^T / |sigma|^2) g` in place.
pub fn project_tangent(sigma: &[f64], g: &mut [f64]) {
    let s2 = dot(sigma, sigma);
    if s2 == 0.0 {
        return;
    }
    let c = dot(sigma, g) / s2;
    g.iter_mut().zip(sigma).for_each(|(gi, si)| *gi -= c * si);
}

fn quad_form(a: &[f64], s: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        acc += s[i] * dot(&a[i * n..(i + 1) * n], s);
    }
    acc
}

fn contract_last(t: &[f64], s: &[f64], n: usize) -> Vec<f64> {
    t.chunks_exact(n).map(|row| dot(row, s)).collect()
}

fn full_contract(t: &[f64], s: &[f64], n: usize) -> f64 {
    let mut v = contract_last(t, s, n);
    while v.len() > 1 {
        v = contract_last(&v, s, n);
    }
    v[0]
}

fn cubic_packed(packed: &[f64], s: &[f64], n: usize) -> f64 {
    let mut idx = 0;
    let mut acc = 0.0;
    for i in 0..n {
        let mut acc_i = 0.0;
        for j in i..n {
            let len = n - j;
            acc_i += s[j] * dot(&packed[idx..idx + len], &s[j..]);
            idx += len;
        }
        acc += s[i] * acc_i;
    }
    acc
}

fn cubic_packed_grad(packed: &[f64], s: &[f64], n: usize, out: &mut [f64]) {
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let len = n - j;
            let row = &packed[idx..idx + len];
            let r = dot(row, &s[j..]);
            out[i] += s[j] * r;
            out[j] += s[i] * r;
            let sij = s[i] * s[j];
            out[j..].iter_mut().zip(row).for_each(|(o, c)| *o += sij * c);
            idx += len;
        }
    }
}

fn pack3(sym: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (n + 1) * (n + 2) / 6);
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let orbit = if i == j && j == k {
                    1.0
                } else if i == j || j == k {
                    3.0
                } else {
                    6.0
                };
                out.push(orbit * sym[(i * n + j) * n + k]);
            }
        }
    }
    out
}

fn symmetrize(raw: &[f64], n: usize, p: usize) -> Vec<f64> {
    match p {
        1 => raw.to_vec(),
        2 => {
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = 0.5 * (raw[i * n + j] + raw[j * n + i]);
                }
            }
            out
        }
        _ => {
            let perms = permutations(p);
            let inv = 1.0 / perms.len() as f64;
            let mut digits = vec![0usize; p];
            let mut out = vec![0.0; raw.len()];
            for (flat, o) in out.iter_mut().enumerate() {
                let mut r = flat;
                for d in (0..p).rev() {
                    digits[d] = r % n;
                    r /= n;
                }
                let mut acc = 0.0;
                for perm in &perms {
                    let mut idx = 0;
                    for &k in perm {
                        idx = idx * n + digits[k];
                    }
                    acc += raw[idx];
                }
                *o = acc * inv;
            }
            out
        }
    }
}

fn permutations(p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..p).collect();
    permute(&mut cur, 0, &mut out);
    out
}

fn permute(cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == cur.len() {
        out.push(cur.clone());
        return;
    }
    for i in k..cur.len() {
        cur.swap(k, i);
        permute(cur, k + 1, out);
        cur.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn unsym_energy(m: &MixtureFunction, n: usize, seed: u64, s: &[f64]) -> f64 {
        let mut e = 0.0;
        for p in 1..=m.degree() {
            let c = if p == 1 { m.linear_variance() } else { m.gamma_sq(p) };
            if c == 0.0 {
                continue;
            }
            let raw = raw_disorder(seed, p, n);
            let mut acc = 0.0;
            for (flat, g) in raw.iter().enumerate() {
                let mut r = flat;
                let mut prod = 1.0;
                for _ in 0..p {
                    prod *= s[r % n];
                    r /= n;
                }
                acc += g * prod;
            }
            e += c.sqrt() / (n as f64).powf((p as f64 - 1.0) / 2.0) * acc;
        }
        e
    }

    #[test]
    fn ordered_tuple_sum_matches_symmetrized_evaluation() {
        let m = MixtureFunction::new(vec![0.2, 0.5, 0.3, 0.1]).unwrap();
        let h = Hamiltonian::sample(&m, 5, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let s = SphereState::uniform(5, &mut rng);
            let a = h.energy(s.coords()).unwrap();
            let b = unsym_energy(&m, 5, 11, s.coords());
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn entries_are_reproducible_independently() {
        let raw = raw_disorder(42, 3, 4);
        for idx in [0u64, 5, 17, 63] {
            assert_eq!(raw[idx as usize], disorder_entry(42, 3, idx));
        }
    }

    #[test]
    fn one_dimensional_quadratic_by_hand() {
        let m = MixtureFunction::pure(2, 1.0).unwrap();
        let h = Hamiltonian::sample(&m, 1, 9).unwrap();
        let g = disorder_entry(9, 2, 0);
        assert!((h.energy(&[1.0]).unwrap() - g).abs() < 1e-15);
        assert!((h.energy(&[-2.0]).unwrap() - 4.0 * g).abs() < 1e-14);
    }

    #[test]
    fn zero_mixture_is_zero() {
        let h = Hamiltonian::sample(&MixtureFunction::zero(), 6, 3).unwrap();
        assert_eq!(h.energy(&[1.0; 6]).unwrap(), 0.0);
    }

    #[test]
    fn cap_names_degree() {
        let m = MixtureFunction::pure(4, 1.0).unwrap();
        match Hamiltonian::sample_with_cap(&m, 10, 0, 1000) {
            Err(Error::Capacity { p, .. }) => assert_eq!(p, 4),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn spike_energy_at_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = SphereState::uniform(7, &mut rng);
        let sm = MixtureFunction::new(vec![0.0, 0.4, 0.2]).unwrap();
        let h0 = Hamiltonian::sample(&MixtureFunction::pure(2, 0.3).unwrap(), 7, 1).unwrap();
        let h = h0.clone().plant(&x, &sm).unwrap();
        let d = h.energy(x.coords()).unwrap() - h0.energy(x.coords()).unwrap();
        assert!((d - 7.0 * sm.value(1.0)).abs() < 1e-12);
        assert!(h.plant(&x, &sm).is_err());
    }

    #[test]
    fn hessian_origin_is_bitwise_symmetric() {
        let h = Hamiltonian::sample(&MixtureFunction::pure(2, 0.5).unwrap(), 9, 2).unwrap();
        let a = h.hessian_origin();
        assert_eq!(a, a.transpose());
        let z = Hamiltonian::sample(&MixtureFunction::pure(3, 0.5).unwrap(), 4, 2).unwrap();
        assert_eq!(z.hessian_origin(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn gradient_by_product_energy_matches() {
        let m = MixtureFunction::from_pairs(&[(1, 0.3), (2, 0.5), (3, 0.2), (4, 0.1)]).unwrap();
        let x = SphereState::basis(5, 1).unwrap();
        let h = Hamiltonian::sample(&m, 5, 11)
            .unwrap()
            .plant(&x, &MixtureFunction::pure(2, 0.4).unwrap())
            .unwrap()
            .with_field(&[0.1, -0.2, 0.3, 0.0, 0.5])
            .unwrap();
        let s = [0.4, -1.1, 0.7, 1.3, -0.2];
        let mut g = [0.0; 5];
        let e = h.gradient_energy_into(&s, &mut g);
        assert!((e - h.energy(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn overlaps() {
        let a = SphereState::basis(4, 0).unwrap();
        let b = SphereState::basis(4, 1).unwrap();
        let neg: Vec<f64> = a.coords().iter().map(|v| -v).collect();
        assert_eq!(overlap(a.coords(), a.coords()).unwrap(), 1.0);
        assert_eq!(overlap(a.coords(), &neg).unwrap(), -1.0);
        assert_eq!(overlap(a.coords(), b.coords()).unwrap(), 0.0);
        assert!(overlap(a.coords(), &[1.0]).is_err());
    }
}
