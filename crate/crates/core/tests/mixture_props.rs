//! Property tests for mixture functions and regime classification.

use proptest::prelude::*;
use spinglass_core::mixture::{classify, MixtureFunction, Part};

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..0.6, 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn regime_implications_hold(c in coeffs(), scale in 0.0f64..2.0) {
        let c: Vec<f64> = c.iter().map(|v| v * scale).collect();
        let m = MixtureFunction::new(c).unwrap();
        let r = classify(&m, 1000).unwrap();
        prop_assert!(!(r.sl && !r.nonshatter), "sl without nonshatter: {r:?}");
        prop_assert!(!(r.nonshatter && r.strict_rs_eps == 0.0), "nonshatter without strict RS: {r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn derivatives_match_finite_differences(
        c in coeffs(),
        tilt in 0.0f64..1.0,
        qs in prop::collection::vec(-0.95f64..0.95, 50),
    ) {
        let m = MixtureFunction::new(c).unwrap().tilted(tilt).unwrap();
        let h = 1e-5;
        for q in qs {
            for order in 1..=3 {
                let exact = m.eval(q, order, Part::Full).unwrap();
                let up = m.eval(q + h, order - 1, Part::Full).unwrap();
                let dn = m.eval(q - h, order - 1, Part::Full).unwrap();
                let fd = (up - dn) / (2.0 * h);
                // central-difference truncation h^2 |xi^(order+2)| / 6 stays below 1e-8 for these mixtures
                let scale = exact.abs().max(1e-2);
                prop_assert!((fd - exact).abs() <= 1e-6 * scale, "order {order} at {q}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn q_star_is_a_monotone_fixed_point(g2 in 0.01f64..0.2, g3 in 0.0f64..0.1) {
        let m = MixtureFunction::from_pairs(&[(2, g2), (3, g3)]).unwrap();
        prop_assume!(classify(&m, 10_000).unwrap().sl);
        let tol = 1e-12;
        let mut last = -1.0;
        for k in 0..12 {
            let t = 0.25 * k as f64;
            let q = m.q_star(t, tol).unwrap();
            let xt = m.tilted(t).unwrap();
            prop_assert!((xt.deriv(q, 1) - q / (1.0 - q)).abs() <= tol);
            if k > 0 {
                prop_assert!(q > last, "q_*({t}) = {q} not above {last}");
            }
            last = q;
        }
    }
}
