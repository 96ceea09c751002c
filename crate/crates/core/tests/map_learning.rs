use spt_core::backtest::{BacktestConfig, PerformanceEvaluator, PerformanceKind};
use spt_core::gp::{Feature, MapLearner};
use spt_core::inference::{grid_search_dwp, GammaLikelihood};
use spt_core::synthetic::PlantedPremium;

fn non_increasing_fraction(m: &[f64]) -> f64 {
    m.windows(2).filter(|w| w[1] <= w[0]).count() as f64 / (m.len() - 1) as f64
}

/// Learner with a likelihood centred above the best DWP performance.
fn cap_learner(data: &spt_core::backtest::Dataset) -> MapLearner {
    let ev = PerformanceEvaluator::new(data, BacktestConfig::default(), PerformanceKind::ExcessReturnVsEwp).unwrap();
    let best = grid_search_dwp(&ev, -8.0, 8.0, 0.05).unwrap().best_value;
    assert!(best > 0.0);
    MapLearner::new(
        vec![Feature::LogMarketWeight],
        GammaLikelihood::new(1.5 * best, 0.5 * best).unwrap(),
    )
}

#[test]
fn bookkeeping_through_the_learner() {
    let data = PlantedPremium { years: 1, ..Default::default() }.generate().unwrap();
    let mut l = cap_learner(&data);
    l.sizes = vec![8];
    l.gibbs.iterations = 10;
    l.gibbs.burn_in = 5;
    let post = l.learn(&data, 0).unwrap();
    assert_eq!(post.retained, 5);
    assert_eq!(post.log_lik_trace.len(), 10);
    assert_eq!(post.mean_log_f.len(), 8);
    assert!(post.log_lik_trace.iter().all(|v| v.is_finite()));
}

#[test]
fn small_cap_map_is_mostly_decreasing() {
    let data = PlantedPremium::default().generate().unwrap();
    let post = cap_learner(&data).learn(&data, 0).unwrap();
    let frac = non_increasing_fraction(&post.mean_log_f);
    println!("non-increasing adjacent pairs: {frac:.3} over {} knots", post.mean_log_f.len());
    // small caps get more weight than large caps at the ends of the map
    let m = &post.mean_log_f;
    assert!(m[0] > m[m.len() - 1]);
    assert!(frac >= 0.9, "only {frac:.3} of adjacent knot pairs are non-increasing");
}
