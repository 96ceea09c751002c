use proptest::prelude::*;
use spt_core::linalg::Mat;
use spt_core::portfolios::{
    dwp_weights, ewp_weights, extended_fgp_weights, fgp_weights, map_portfolio, CovariateDiversity, DiversityG,
    ExpCovariate, FnG, GeneratingFunction,
};

fn simplex(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(|n| prop::collection::vec(1e-3f64..1.0, n)).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn assert_simplex(w: &[f64]) {
    assert!(w.iter().all(|&x| x >= 0.0), "negative weight in {w:?}");
    let s: f64 = w.iter().sum();
    assert!((s - 1.0).abs() <= 1e-12, "sum {s}");
}

/// `(Σ x^p)^{1/p}` straight from the definition, derivatives by finite differences.
fn naive_diversity(p: f64) -> FnG<impl Fn(&[f64]) -> f64> {
    FnG(move |x: &[f64]| x.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dwp_stays_on_simplex(mu in simplex(2..=50), p in -8.0f64..8.0) {
        assert_simplex(dwp_weights(&mu, p).unwrap().as_slice());
    }

    #[test]
    fn dwp_matches_direct_powers(mu in simplex(2..=20), p in -3.0f64..3.0) {
        let w = dwp_weights(&mu, p).unwrap();
        let raw: Vec<f64> = mu.iter().map(|m| m.powf(p)).collect();
        let s: f64 = raw.iter().sum();
        for (a, b) in w.as_slice().iter().zip(&raw) {
            prop_assert!((a - b / s).abs() < 1e-12);
        }
    }

    #[test]
    fn dwp_endpoints_are_exact(mu in simplex(2..=30)) {
        prop_assert_eq!(dwp_weights(&mu, 1.0).unwrap().into_vec(), mu.clone());
        prop_assert_eq!(dwp_weights(&mu, 0.0).unwrap(), ewp_weights(mu.len()).unwrap());
    }

    #[test]
    fn map_of_scaled_log_weight_is_dwp(mu in simplex(2..=30), p in -8.0f64..8.0, shift in -50.0f64..50.0) {
        let chars = Mat::from_fn(mu.len(), 1, |i, _| mu[i].ln());
        let w = map_portfolio(|x| p * x[0], &chars).unwrap();
        assert_simplex(w.as_slice());
        let d = dwp_weights(&mu, p).unwrap();
        for (a, b) in w.as_slice().iter().zip(d.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let shifted = map_portfolio(|x| p * x[0] + shift, &chars).unwrap();
        for (a, b) in w.as_slice().iter().zip(shifted.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fgp_is_invariant_to_scaling_g(mu in simplex(2..=10), k in -20i32..20, p in -2.0f64..0.99) {
        let g = naive_diversity(p);
        let c = 2f64.powi(k);
        let scaled = FnG(|x: &[f64]| c * g.value(x));
        let a = fgp_weights(&g, &mu).unwrap();
        let b = fgp_weights(&scaled, &mu).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences(mu in simplex(2..=8), p in prop::sample::select(vec![-2.0, -0.5, 0.5, 0.99])) {
        let g = DiversityG { p };
        let fd = naive_diversity(p).gradient(&mu);
        for (a, b) in g.gradient(&mu).iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-3));
        }
    }
}

#[test]
fn fgp_with_finite_differences_matches_dwp() {
    let mu = [0.5, 0.3, 0.2];
    let w = fgp_weights(&naive_diversity(0.5), &mu).unwrap();
    let d = dwp_weights(&mu, 0.5).unwrap();
    for (a, b) in w.as_slice().iter().zip(d.as_slice()) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn extended_examples() {
    let mu = [0.5, 0.3, 0.2];
    let e = extended_fgp_weights(&ExpCovariate(DiversityG { p: -0.5 }), &mu, &[2.5]).unwrap();
    let d = dwp_weights(&mu, -0.5).unwrap();
    for (a, b) in e.as_slice().iter().zip(d.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
    let h = CovariateDiversity { base: 0.5, slope: 0.1 };
    let e = extended_fgp_weights(&h, &mu, &[1.0]).unwrap();
    let d = dwp_weights(&mu, 0.6).unwrap();
    for (a, b) in e.as_slice().iter().zip(d.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn dwp_minus_one_hand_values() {
    // normalise (2, 10/3, 5)
    let w = dwp_weights(&[0.5, 0.3, 0.2], -1.0).unwrap();
    let raw = [2.0, 10.0 / 3.0, 5.0];
    let s: f64 = raw.iter().sum();
    for (a, b) in w.as_slice().iter().zip(raw) {
        assert!((a - b / s).abs() < 1e-15);
    }
    assert!((w[0] - 0.193548).abs() < 1e-6);
}

#[test]
fn ewp_five_hundred() {
    let w = ewp_weights(500).unwrap();
    assert!(w.as_slice().iter().all(|&x| x == 0.002));
    assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
