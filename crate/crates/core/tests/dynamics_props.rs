//! Properties of Langevin initialization and the annealing schedule.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinglass_core::dynamics::{anneal_tv_bound, AnnealSchedule};
use spinglass_core::SphereState;

#[test]
fn uniform_coordinates_are_exchangeable() {
    let n = 5;
    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    let mut fourth = vec![0.0; n];
    for _ in 0..draws {
        let s = SphereState::uniform(n, &mut rng);
        for (i, v) in s.coords().iter().enumerate() {
            first[i] += v;
            second[i] += v * v;
            fourth[i] += v.powi(4);
        }
    }
    let d = draws as f64;
    // On the sphere of radius sqrt(n): E x_i^2 = 1 and E x_i^4 = 3n/(n+2).
    let m4 = 3.0 * n as f64 / (n as f64 + 2.0);
    for i in 0..n {
        let se2 = ((m4 - 1.0) / d).sqrt();
        assert!((first[i] / d).abs() <= 4.5 * (1.0 / d).sqrt());
        assert!((second[i] / d - 1.0).abs() <= 4.5 * se2);
        assert!((fourth[i] / d - m4).abs() <= 0.15 * m4);
    }
}

proptest! {
    #[test]
    fn schedule_partitions_the_steps(k in 1usize..40, t in 0.05f64..3.0, h in 0.001f64..0.05) {
        let s = AnnealSchedule::new(0.05, t.max(h), 0.05 * k as f64, h).unwrap();
        prop_assert_eq!(s.stages(), k + 1);
        let sum: usize = (0..s.stages()).map(|j| s.steps_in_stage(j)).sum();
        prop_assert_eq!(sum, s.total_steps());
        prop_assert_eq!(s.beta(s.stages() - 1), s.beta_max);
    }

    #[test]
    fn tv_bound_is_monotone(c in 0.01f64..2.0, eps in 0.0f64..0.5, t in 0.1f64..20.0, dt in 0.0f64..5.0, de in 0.0f64..0.5) {
        let b = |t: f64, e: f64| anneal_tv_bound(c, e, t, 0.01, 1.0, 3.0, 5.0).unwrap();
        prop_assert!(b(t + dt, eps) <= b(t, eps));
        prop_assert!(b(t, eps + de) >= b(t, eps));
    }
}
