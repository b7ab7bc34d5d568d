//! One-dimensional search helpers shared by the threshold and root finders.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    // the bracket endpoints can beat the midpoint when the minimum sits on the boundary
    [(x, fx), (c, fc), (d, fd)].into_iter().fold((x, fx), |best, cand| if cand.1 < best.1 { cand } else { best })
}

/// Minimize `f` over the grid `lo + i*(hi-lo)/grid`, `i = 0..=grid`, then refine the best
/// cell with golden-section search. Returns `(argmin, min)`.
pub fn grid_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid: usize, tol: f64) -> (f64, f64) {
    let step = (hi - lo) / grid as f64;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..=grid {
        let v = f(lo + step * i as f64);
        if v < best || (best.is_nan() && !v.is_nan()) {
            best = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    let (x, fx) = golden_min(&mut f, a, b, tol);
    if fx < best {
        (x, fx)
    } else {
        (lo + step * best_i as f64, best)
    }
}

/// Bisection for a sign change of `g` on `[lo, hi]`; `g(lo)` and `g(hi)` must differ in sign.
/// Stops once `accept(x, g(x))` holds or the bracket stops shrinking.
pub fn bisect<F, A>(mut g: F, mut lo: f64, mut hi: f64, mut accept: A) -> f64
where
    F: FnMut(f64) -> f64,
    A: FnMut(f64, f64) -> bool,
{
    let glo = g(lo);
    let lo_positive = glo > 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let gm = g(mid);
        if accept(mid, gm) {
            return mid;
        }
        if (gm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, fx) = golden_min(|x| (x - 0.3) * (x - 0.3) + 1.0, 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_min_handles_boundary_minimum() {
        let (x, fx) = grid_min(|x| x, 0.0, 1.0, 100, 1e-12);
        assert_eq!(x, 0.0);
        assert_eq!(fx, 0.0);
    }

    #[test]
    fn bisect_square_root_of_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, |_, g| g.abs() < 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }
}
