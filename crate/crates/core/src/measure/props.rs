use proptest::prelude::*;
use super::{wasserstein, wasserstein_1d, wasserstein_exact, DiscreteMeasure};

fn measure(dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1usize..=10).prop_flat_map(move |k| {
        (
            prop::collection::vec(-5.0f64..5.0, k * dim),
            prop::collection::vec(0.01f64..1.0, k),
        )
            .prop_map(move |(pts, w)| DiscreteMeasure::from_flat(dim, pts, w).unwrap())
    })
}

fn order() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(2.0), 1.0f64..3.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_axioms((mu, nu, ka) in (1usize..3).prop_flat_map(|d| (measure(d), measure(d), measure(d))), p in order()) {
        let w = |a: &DiscreteMeasure, b: &DiscreteMeasure| wasserstein(a, b, p).unwrap();
        prop_assert!((w(&mu, &nu) - w(&nu, &mu)).abs() <= 1e-9);
        prop_assert!(wasserstein_exact(&mu, &mu, p).unwrap().0.abs() <= 1e-12);
        prop_assert!(w(&mu, &mu).abs() <= 1e-12);
        prop_assert!(w(&mu, &ka) <= w(&mu, &nu) + w(&nu, &ka) + 1e-9);
    }

    #[test]
    fn monotone_in_order(mu in measure(2), nu in measure(2), p in 1.0f64..2.0, dq in 0.0f64..2.0) {
        let q = p + dq;
        prop_assert!(wasserstein(&mu, &nu, p).unwrap() <= wasserstein(&mu, &nu, q).unwrap() + 1e-9);
    }

    #[test]
    fn translation_and_scaling(mu in measure(2), nu in measure(2), p in order(), s in -3.0f64..3.0, a in 0.1f64..4.0) {
        let base = wasserstein(&mu, &nu, p).unwrap();
        let shift = |m: &DiscreteMeasure| m.map_points(|x| x.iter().map(|v| v + s).collect()).unwrap();
        let scale = |m: &DiscreteMeasure| m.map_points(|x| x.iter().map(|v| v * a).collect()).unwrap();
        prop_assert!((wasserstein(&shift(&mu), &shift(&nu), p).unwrap() - base).abs() <= 1e-10 * base.max(1.0));
        prop_assert!((wasserstein(&scale(&mu), &scale(&nu), p).unwrap() - a * base).abs() <= 1e-10 * (a * base).max(1.0));
    }

    #[test]
    fn closed_form_matches_exact(mu in measure(1), nu in measure(1), p in order()) {
        let closed = wasserstein_1d(&mu, &nu, p).unwrap();
        let exact = wasserstein_exact(&mu, &nu, p).unwrap().0;
        prop_assert!((closed - exact).abs() <= 1e-9);
    }
}
