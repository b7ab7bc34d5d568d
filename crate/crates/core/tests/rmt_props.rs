//! Statistical properties of the degree-2 random-matrix calculus.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinglass_core::dynamics::{default_step, langevin_step_in_place, LangevinWorkspace};
use spinglass_core::rmt::{cov_prediction, g_function, gamma_star};
use spinglass_core::{classify, Hamiltonian, MixtureFunction, SphereState};

/// Pure 2-spin mixture with `xi''(0) = 0.25`.
fn quarter() -> MixtureFunction {
    MixtureFunction::pure(2, 0.125).unwrap()
}

fn lambda_max(h: &Hamiltonian) -> f64 {
    h.hessian_origin().symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn hessian_shift_event_is_typical() {
    let m = quarter();
    let eps = classify(&m, 10_000).unwrap().strict_rs_eps;
    assert!(eps > 0.0);
    let cap = 1.0 + 0.25 - eps * eps / 8.0;
    let draws = 200;
    let good =
        (0..draws).filter(|s| lambda_max(&Hamiltonian::sample(&m, 200, 7000 + *s as u64).unwrap()) <= cap).count();
    assert!(good * 100 >= 99 * draws, "{good}/{draws} draws satisfy the shift condition");
}

#[test]
fn g_second_derivative_concentrates() {
    let m = quarter();
    let n = 600;
    let draws = 40;
    let target = 2.0 / (1.0 - 0.25);
    let tol = (n as f64).powf(-1.0 / 3.0);
    let good = (0..draws)
        .filter(|s| {
            let h = Hamiltonian::sample(&m, n, 9000 + *s as u64).unwrap();
            let eigs: Vec<f64> = h.hessian_origin().symmetric_eigenvalues().iter().map(|v| 0.5 * v).collect();
            let g2 = g_function(&eigs, gamma_star(&eigs, 1e-14).unwrap(), 2).unwrap();
            (g2 / target - 1.0).abs() <= tol
        })
        .count();
    assert!(good * 100 >= 95 * draws, "{good}/{draws} draws within N^(-1/3)");
}

#[test]
fn eigen_projections_are_subgaussian() {
    let m = quarter();
    let n = 30;
    let h = Hamiltonian::sample(&m, n, 11).unwrap();
    let pred = cov_prediction(&h).unwrap();
    let step = default_step(&m, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut s = SphereState::uniform(n, &mut rng).into_vec();
    let mut ws = LangevinWorkspace::new(n);
    for _ in 0..20_000 {
        langevin_step_in_place(&mut s, &h, 1.0, step, &mut rng, &mut ws).unwrap();
    }
    let mut proj: Vec<Vec<f64>> = vec![Vec::new(); n];
    for k in 0..200_000 {
        langevin_step_in_place(&mut s, &h, 1.0, step, &mut rng, &mut ws).unwrap();
        if k % 20 == 0 {
            for (i, row) in proj.iter_mut().enumerate() {
                let v = pred.eigenvectors.column(i);
                row.push(v.iter().zip(&s).map(|(a, b)| a * b).sum());
            }
        }
    }
    let top_var = pred.eigen_variances.iter().copied().fold(0.0, f64::max);
    for w in &proj {
        let len = w.len() as f64;
        let m2 = w.iter().map(|x| x * x).sum::<f64>() / len;
        let m4 = w.iter().map(|x| x.powi(4)).sum::<f64>() / len;
        assert!(m2 <= 2.0 * top_var, "second moment {m2} vs largest predicted variance {top_var}");
        assert!(m4 / (m2 * m2) <= 4.5, "kurtosis {}", m4 / (m2 * m2));
        let sd = m2.sqrt();
        for t in [1.0, 2.0, 3.0] {
            let frac = w.iter().filter(|x| x.abs() > t * sd).count() as f64 / len;
            assert!(frac <= 3.0 * (-0.25 * t * t).exp(), "tail beyond {t} sd is {frac}");
        }
    }
}
