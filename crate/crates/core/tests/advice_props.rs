//! Statistical properties of advice sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spinglass_core::advice::{empirical_weights, run_advice, AdviceOptions, Component, InitMode, MixtureTarget};

#[test]
fn imbalance_tail_is_bernstein_scale() {
    let target = MixtureTarget::new(vec![
        Component { weight: 0.3, mean: vec![-4.0], sigma: 1.0 },
        Component { weight: 0.7, mean: vec![4.0], sigma: 1.0 },
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps = 200;
    for (m, eps) in [(40usize, 0.3), (100, 0.2), (400, 0.1)] {
        let exceed = (0..reps)
            .filter(|_| {
                let s: Vec<Vec<f64>> = (0..m).map(|_| target.sample(&mut rng).1).collect();
                empirical_weights(&s, &target).unwrap().imbalance > eps
            })
            .count();
        let bound = (2.0 * (-(m as f64) * target.p_star() * eps * eps / 10.0).exp()).min(1.0);
        // one-sided binomial allowance at three standard deviations
        let allowance = reps as f64 * bound + 3.0 * (reps as f64 * bound * (1.0 - bound)).sqrt();
        assert!(exceed as f64 <= allowance, "m={m}: {exceed} exceedances, allowance {allowance}");
    }
}

#[test]
fn chi2_trace_obeys_the_component_decomposition() {
    let target = MixtureTarget::two_wells(1, 6.0).unwrap();
    let opts = AdviceOptions { cell: 0.1, margin: 6.0, checkpoints: 6, hist_bins: 0 };
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tr = run_advice(&target, 60, 3.0, 0.01, &mut rng, InitMode::Advice, &opts).unwrap();
        let c = target.pi_constant();
        for (t, chi2) in tr.times.iter().zip(&tr.chi2) {
            let bound = (-c * t).exp() * tr.chi2[0] + tr.advice.imbalance;
            assert!(*chi2 <= bound * (1.0 + 1e-9), "t={t}: {chi2} > {bound}");
        }
        let last = *tr.chi2.last().unwrap();
        assert!(last >= tr.advice.imbalance * (1.0 - 1e-3), "inter-well mass moved: {last}");
    }
}
