use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spt_core::linalg::Mat;
use spt_core::market::{
    arbitrage_horizon_bound, check_diversity, check_nondegeneracy, market_weights, relative_covariance,
    simulate_market, MarketParams,
};

/// Log-Euler recursion written out with scalars, drawing the normals itself.
fn scalar_loop(b: &[f64], s: &[Vec<f64>], x0: &[f64], dt: f64, steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let n = x0.len();
    let d = s[0].len();
    let mut lx: Vec<f64> = x0.iter().map(|v| v.ln()).collect();
    for _ in 0..steps {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for i in 0..n {
            let mut var = 0.0;
            let mut shock = 0.0;
            for nu in 0..d {
                var += s[i][nu] * s[i][nu];
                shock += s[i][nu] * z[nu];
            }
            lx[i] += (b[i] - 0.5 * var) * dt + shock * dt.sqrt();
        }
    }
    let x: Vec<f64> = lx.iter().map(|v| v.exp()).collect();
    let tot: f64 = x.iter().sum();
    x.iter().map(|v| v / tot).collect()
}

#[test]
fn seed_42_terminal_weights_match_scalar_oracle() {
    let params = MarketParams::diagonal(3, 0.05, 0.2, vec![1.0, 2.0, 3.0]).unwrap();
    let path = simulate_market(&params, 1.0, 1.0 / 252.0, 42).unwrap();
    assert_eq!(path.steps(), 252);
    let s: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 0.2 } else { 0.0 }).collect()).collect();
    let oracle = scalar_loop(&[0.05; 3], &s, &[1.0, 2.0, 3.0], 1.0 / 252.0, 252, 42);
    for i in 0..3 {
        assert!((path.weights[(252, i)] - oracle[i]).abs() < 1e-12);
    }
}

#[test]
fn seed_42_diversity_threshold() {
    let params = MarketParams::diagonal(3, 0.05, 0.2, vec![1.0, 2.0, 3.0]).unwrap();
    let path = simulate_market(&params, 1.0, 1.0 / 252.0, 42).unwrap();
    let mut max_w = 0.0f64;
    for k in 0..=path.steps() {
        for i in 0..3 {
            max_w = max_w.max(path.weights[(k, i)]);
        }
    }
    assert!(check_diversity(&path, 1.0 - max_w - 1e-9).unwrap());
    assert!(!check_diversity(&path, 1.0 - max_w + 1e-9).unwrap());
}

#[test]
fn zero_vol_is_deterministic_exponential() {
    let b = vec![0.05, 0.0, -0.05];
    let params = MarketParams::new(b.clone(), Mat::zeros(3, 3), vec![1.0, 2.0, 3.0]).unwrap();
    let path = simulate_market(&params, 2.0, 0.01, 7).unwrap();
    for k in 0..=path.steps() {
        let t = path.times[k];
        for i in 0..3 {
            let want = [1.0, 2.0, 3.0][i] * (b[i] * t).exp();
            assert!((path.caps[(k, i)] / want - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn nondegeneracy_agrees_with_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vol = Mat::from_fn(4, 5, |_, _| StandardNormal.sample(&mut rng));
    let a = vol.gram();
    let dm = DMatrix::from_fn(4, 4, |i, j| a[(i, j)]);
    let min_eig = dm.symmetric_eigen().eigenvalues.min();
    assert!(check_nondegeneracy(&vol, min_eig - 1e-8).unwrap());
    assert!(!check_nondegeneracy(&vol, min_eig + 1e-8).unwrap());
}

#[test]
fn nondegeneracy_examples() {
    assert!(check_nondegeneracy(&Mat::scaled_identity(3, 0.2), 0.04).unwrap());
    let dup = Mat::from_rows(&[vec![0.1, 0.2, 0.0], vec![0.1, 0.2, 0.0], vec![0.0, 0.0, 0.3]]).unwrap();
    assert!(!check_nondegeneracy(&dup, 1e-12).unwrap());
    assert!(check_nondegeneracy(&dup, 0.0).is_err());
}

#[test]
fn horizon_bound_for_500_assets() {
    let t = arbitrage_horizon_bound(500.0, 0.04, 0.5, 0.5).unwrap();
    assert!((t - 2.0 * 500f64.ln() / 0.01).abs() < 1e-9);
    assert!((t - 1242.92).abs() < 0.01);
}

fn vol_and_weights() -> impl Strategy<Value = (Mat, Vec<f64>)> {
    (2usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(-0.5f64..0.5, n * (n + 1)),
            prop::collection::vec(1e-3f64..1.0, n),
        )
            .prop_map(move |(s, m)| {
                let tot: f64 = m.iter().sum();
                (
                    Mat::from_row_major(n, n + 1, s).unwrap(),
                    m.into_iter().map(|x| x / tot).collect(),
                )
            })
    })
}

proptest! {
    #[test]
    fn relative_covariance_kernel_and_symmetry((vol, mu) in vol_and_weights()) {
        let tau = relative_covariance(&vol, &mu).unwrap();
        let t = tau.matrix();
        let n = mu.len();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| t[(i, j)] * mu[j]).sum();
            prop_assert!(row.abs() < 1e-10);
            for j in 0..n {
                prop_assert!((t[(i, j)] - t[(j, i)]).abs() < 1e-12);
            }
        }
        // positive semidefinite along random directions
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin()).collect();
        let q: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| x[i] * t[(i, j)] * x[j]).sum();
        prop_assert!(q >= -1e-10);
    }

    #[test]
    fn weights_scale_exactly_by_powers_of_two(caps in prop::collection::vec(1e-3f64..1e6, 1..40), k in -20i32..20) {
        let w = market_weights(&caps).unwrap();
        let scaled: Vec<f64> = caps.iter().map(|c| c * 2f64.powi(k)).collect();
        prop_assert_eq!(market_weights(&scaled).unwrap(), w.clone());
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_rows_sum_to_one(n in 2usize..60, seed in any::<u64>()) {
        let params = MarketParams::diagonal(n, 0.03, 0.4, (1..=n).map(|i| i as f64).collect()).unwrap();
        let path = simulate_market(&params, 0.5, 1.0 / 252.0, seed).unwrap();
        for k in 0..=path.steps() {
            let s: f64 = path.weights.row(k).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn checks_are_monotone(seed in any::<u64>(), d1 in 0.01f64..0.99, d2 in 0.01f64..0.99, e1 in 1e-4f64..0.1, e2 in 1e-4f64..0.1) {
        let params = MarketParams::diagonal(3, 0.05, 0.3, vec![1.0, 2.0, 3.0]).unwrap();
        let path = simulate_market(&params, 1.0, 1.0 / 52.0, seed).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        if check_diversity(&path, hi).unwrap() {
            prop_assert!(check_diversity(&path, lo).unwrap());
        }
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        if check_nondegeneracy(&params.vol, hi).unwrap() {
            prop_assert!(check_nondegeneracy(&params.vol, lo).unwrap());
        }
    }
}

#[test]
fn large_market_rows_sum_to_one() {
    let n = 500;
    let params = MarketParams::diagonal(n, 0.05, 0.3, (1..=n).map(|i| i as f64).collect()).unwrap();
    let path = simulate_market(&params, 1.0, 1e-4, 5).unwrap();
    assert_eq!(path.steps(), 10_000);
    for k in 0..=path.steps() {
        let s: f64 = path.weights.row(k).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
