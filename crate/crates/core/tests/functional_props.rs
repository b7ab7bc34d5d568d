//! Property tests for Glauber chains, weak Poincare transfers and exact divergences.

use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinglass_core::dynamics::glauber_matrix;
use spinglass_core::functional::{
    chi2_trajectory, divergences, spectral_gap, transfer, variance_conservation_constant, weak_pi_probe,
    DiscreteMeasure, Transfer, TransferOutput, WeakPI,
};

fn cube_weights(bits: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 1 << bits)
}

fn probe_ok(pi: &DiscreteMeasure, w: WeakPI, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    !weak_pi_probe(pi, w, 200, &mut rng).unwrap().is_refuted()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn glauber_rows_and_spectrum(bits in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..1usize << bits).map(|_| rand::Rng::random_range(&mut rng, 0.01..1.0)).collect();
        let pi = DiscreteMeasure::cube(bits, w).unwrap();
        let p = glauber_matrix(&pi).unwrap();
        let pw = pi.weights();
        for x in 0..p.nrows() {
            let row: f64 = p.row(x).iter().sum();
            prop_assert!((row - 1.0).abs() <= 1e-14);
            for y in 0..p.ncols() {
                prop_assert!((pw[x] * p[(x, y)] - pw[y] * p[(y, x)]).abs() <= 1e-14);
            }
        }
        // I - P is similar to a symmetric matrix through diag(sqrt(pi))
        let size = p.nrows();
        let sym = nalgebra::DMatrix::from_fn(size, size, |x, y| {
            let id = if x == y { 1.0 } else { 0.0 };
            (id - p[(x, y)]) * (pw[x] / pw[y]).sqrt()
        });
        let sym = (&sym + sym.transpose()) * 0.5;
        for l in SymmetricEigen::new(sym).eigenvalues.iter() {
            prop_assert!(*l >= -1e-12 && *l <= 2.0 + 1e-12, "eigenvalue {l}");
        }
    }

    #[test]
    fn chi2_trajectory_is_nonincreasing(w in cube_weights(3), v in cube_weights(3)) {
        let pi = DiscreteMeasure::cube(3, w).unwrap();
        let nu = DiscreteMeasure::cube(3, v).unwrap();
        let tr = chi2_trajectory(&pi, &nu, 5.0, 50).unwrap();
        let d0 = divergences(&nu, &pi).unwrap().chi2;
        prop_assert!((tr[0].1 - d0).abs() <= 1e-10 * d0.max(1.0));
        for k in 1..tr.len() {
            prop_assert!(tr[k].1 <= tr[k - 1].1 * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn decomposition_transfer_is_sound(
        parts in prop::collection::vec(cube_weights(3), 2..4),
        rho in prop::collection::vec(0.1f64..1.0, 3),
        delta in 0.0f64..0.2,
        eta in 0.0f64..0.2,
        seed in any::<u64>(),
    ) {
        let parts: Vec<(f64, DiscreteMeasure)> = parts
            .into_iter()
            .zip(&rho)
            .map(|(w, r)| (*r, DiscreteMeasure::cube(3, w).unwrap()))
            .collect();
        let total: f64 = parts.iter().map(|(r, _)| r).sum();
        let mut mix = vec![0.0; 8];
        for (r, m) in &parts {
            mix.iter_mut().zip(m.weights()).for_each(|(a, b)| *a += r / total * b);
        }
        let pi = DiscreteMeasure::cube(3, mix).unwrap();
        let c_min = parts.iter().map(|(_, m)| spectral_gap(m).unwrap()).fold(f64::INFINITY, f64::min);
        let c_var = variance_conservation_constant(&parts).unwrap();
        let out = transfer(Transfer::Decomposition { c_pi: c_min, c_var, delta, eta }).unwrap();
        prop_assert!(probe_ok(&pi, out.weak_pi().unwrap(), seed));
    }

    #[test]
    fn glauber_perturbation_transfer_is_sound(
        w in cube_weights(3),
        noise in prop::collection::vec(0.5f64..1.5, 8),
        seed in any::<u64>(),
    ) {
        let pi = DiscreteMeasure::cube(3, w.clone()).unwrap();
        let moved = DiscreteMeasure::cube(3, w.iter().zip(&noise).map(|(a, b)| a * b).collect()).unwrap();
        let delta = divergences(&moved, &pi).unwrap().tv;
        let c = spectral_gap(&pi).unwrap();
        let out = transfer(Transfer::PerturbGlauber { c_pi: c, delta }).unwrap();
        prop_assert!(probe_ok(&moved, out.weak_pi().unwrap(), seed));
    }

    #[test]
    fn stopped_scheme_and_mlsi_arithmetic(
        c in 0.0f64..3.0, d in 0.0f64..0.3, e1 in 0.0f64..0.3, e2 in 0.0f64..0.3,
        t in 0.0f64..3.0, k in 0.0f64..3.0, pmin in 0.001f64..0.5,
    ) {
        let w = transfer(Transfer::StoppedScheme { c_pi: c, delta: d, eta1: e1, eta2: e2, t, k })
            .unwrap()
            .weak_pi()
            .unwrap();
        prop_assert_eq!(w.c, c * (-t * k).exp());
        prop_assert_eq!(w.eps, (d + e1 + e2) / (-t * k).exp());
        match transfer(Transfer::PiToMlsi { c_pi: c, eps: d, pi_min: pmin }).unwrap() {
            TransferOutput::Mlsi { mlsi, lsi } => {
                prop_assert!((mlsi.c - 4.0 * lsi.c).abs() <= 1e-15 * mlsi.c.max(1.0));
                prop_assert_eq!(mlsi.eps, lsi.eps);
                prop_assert!(lsi.c <= c * 0.5 + 1e-15);
            }
            other => prop_assert!(false, "unexpected output {other:?}"),
        }
    }

    #[test]
    fn variance_conservation_constant_is_a_lower_bound(
        parts in prop::collection::vec(cube_weights(2), 2..4),
        rho in prop::collection::vec(0.1f64..1.0, 3),
        fs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 10),
    ) {
        let parts: Vec<(f64, DiscreteMeasure)> = parts
            .into_iter()
            .zip(&rho)
            .map(|(w, r)| (*r, DiscreteMeasure::cube(2, w).unwrap()))
            .collect();
        let total: f64 = parts.iter().map(|(r, _)| r).sum();
        let mut mix = vec![0.0; 4];
        for (r, m) in &parts {
            mix.iter_mut().zip(m.weights()).for_each(|(a, b)| *a += r / total * b);
        }
        let pi = DiscreteMeasure::cube(2, mix).unwrap();
        let c_var = variance_conservation_constant(&parts).unwrap();
        prop_assert!((0.0..=1.0).contains(&c_var));
        for f in &fs {
            let inner: f64 = parts.iter().map(|(r, m)| r / total * m.variance(f).unwrap()).sum();
            prop_assert!(inner >= c_var * pi.variance(f).unwrap() - 1e-12);
        }
    }
}
