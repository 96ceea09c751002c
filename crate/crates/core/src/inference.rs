//! Learning the diversity exponent `p`: exhaustive grid search and
//! random-walk Metropolis-Hastings under a Gamma performance likelihood
//! with a uniform prior on `[lower, upper]`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::backtest::{DiversityWeighted, PerformanceEvaluator};
use crate::error::{Error, Result};
use crate::math::{ln_gamma, Real};
use crate::rng;

/// Gamma density parameterised by mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaLikelihood {
    mean: f64,
    std: f64,
}

impl GammaLikelihood {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite() && std > 0.0 && std.is_finite()) {
            return Err(Error::invalid("Gamma mean and standard deviation must be positive"));
        }
        Ok(GammaLikelihood { mean, std })
    }

    /// Recover the mean/std parameterisation from shape and scale.
    pub fn from_shape_scale(shape: f64, scale: f64) -> Result<Self> {
        Self::new(shape * scale, shape.sqrt() * scale)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    /// `k = (a/b)²`.
    pub fn shape(&self) -> f64 {
        let r = self.mean / self.std;
        r * r
    }

    /// `θ = b²/a`.
    pub fn scale(&self) -> f64 {
        self.std * self.std / self.mean
    }

    /// `(k−1)θ = a − b²/a` when `k > 1`, else 0.
    pub fn mode(&self) -> f64 {
        if self.shape() > 1.0 {
            self.mean - self.std * self.std / self.mean
        } else {
            0.0
        }
    }

    /// Log density; `-inf` outside the positive half-line.
    pub fn log_density(&self, x: f64) -> f64 {
        gamma_log_density(x, self)
    }
}

impl Default for GammaLikelihood {
    fn default() -> Self {
        GammaLikelihood { mean: 7.0, std: 0.5 }
    }
}

pub fn gamma_log_density(x: f64, lik: &GammaLikelihood) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NEG_INFINITY;
    }
    if x.is_infinite() {
        return f64::NEG_INFINITY;
    }
    let k = lik.shape();
    let theta = lik.scale();
    (k - 1.0) * x.ln() - x / theta - ln_gamma(k) - k * theta.ln()
}

/// Ties within this relative tolerance go to the smaller `|p|`.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: f64,
    pub best_value: f64,
    /// `(p, value)` for every grid point; `None` where evaluation failed.
    pub evaluations: Vec<(f64, Option<f64>)>,
    pub skipped: Vec<(f64, Error)>,
}

/// Points `lo + k·(hi−lo)/(m−1)` where `m = round((hi−lo)/mesh) + 1`.
pub fn uniform_grid(lo: f64, hi: f64, mesh: f64) -> Result<Vec<f64>> {
    if !(mesh > 0.0) || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("grid needs mesh > 0 and lo < hi"));
    }
    let m = ((hi - lo) / mesh).round() as usize + 1;
    Ok((0..m)
        .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
        .collect())
}

/// Maximise `perf` over a uniform grid. Failed points are skipped and
/// reported.
pub fn grid_search(
    lo: f64,
    hi: f64,
    mesh: f64,
    mut perf: impl FnMut(f64) -> Result<f64>,
) -> Result<GridSearchResult> {
    let grid = uniform_grid(lo, hi, mesh)?;
    let mut evaluations = Vec::with_capacity(grid.len());
    let mut skipped = Vec::new();
    for &p in &grid {
        match perf(p) {
            Ok(v) if !v.is_nan() => evaluations.push((p, Some(v))),
            Ok(v) => {
                skipped.push((p, Error::numeric(format!("performance is {v}"))));
                evaluations.push((p, None));
            }
            Err(e) => {
                skipped.push((p, e));
                evaluations.push((p, None));
            }
        }
    }
    let best_value = evaluations
        .iter()
        .filter_map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !evaluations.iter().any(|(_, v)| v.is_some()) {
        return Err(Error::NoFeasiblePoint(format!(
            "all {} grid points failed",
            evaluations.len()
        )));
    }
    let tol = TIE_TOL * best_value.abs().max(1.0);
    let best = evaluations
        .iter()
        .filter(|(_, v)| v.is_some_and(|v| v >= best_value - tol))
        .map(|(p, _)| *p)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)))
        .unwrap_or(f64::NAN);
    let best_value = evaluations
        .iter()
        .find(|(p, _)| *p == best)
        .and_then(|(_, v)| *v)
        .unwrap_or(best_value);
    Ok(GridSearchResult {
        best,
        best_value,
        evaluations,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_std: f64,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 10_000,
            burn_in: 5_000,
            proposal_std: 0.5,
            lower: -8.0,
            upper: 8.0,
            initial: 0.0,
        }
    }
}

/// Full chain trace; statistics use the post-burn-in part.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentChain {
    pub config: ChainConfig,
    /// State after each iteration.
    pub samples: Vec<f64>,
    pub log_liks: Vec<f64>,
    pub accepted: Vec<bool>,
    pub accept_count: usize,
}

impl ExponentChain {
    pub fn retained(&self) -> &[f64] {
        &self.samples[self.config.burn_in.min(self.samples.len())..]
    }

    pub fn posterior_mean(&self) -> f64 {
        mean(self.retained())
    }

    pub fn posterior_std(&self) -> f64 {
        let r = self.retained();
        variance(r).sqrt()
    }

    /// Acceptance rate over retained iterations.
    pub fn acceptance_rate(&self) -> f64 {
        let a = &self.accepted[self.config.burn_in.min(self.accepted.len())..];
        if a.is_empty() {
            return 0.0;
        }
        a.iter().filter(|&&x| x).count() as f64 / a.len() as f64
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n-1` divisor.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Monte Carlo standard error of the mean by non-overlapping batch means.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let b = batches.max(2);
    let size = x.len() / b;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b).map(|k| mean(&x[k * size..(k + 1) * size])).collect();
    (variance(&means) / b as f64).sqrt()
}

/// `min(1, exp(proposal − current))`, or 0 outside the support.
pub fn acceptance_probability(current_log: f64, proposal_log: f64, in_support: bool) -> f64 {
    if !in_support || proposal_log == f64::NEG_INFINITY {
        return 0.0;
    }
    let d = proposal_log - current_log;
    if d >= 0.0 {
        1.0
    } else {
        d.exp()
    }
}

/// One Metropolis decision with a symmetric proposal, in log space.
pub fn metropolis_accept<R: Rng + ?Sized>(rng: &mut R, current_log: f64, proposal_log: f64) -> bool {
    if proposal_log == f64::NEG_INFINITY {
        return false;
    }
    let d = proposal_log - current_log;
    d >= 0.0 || rng::uniform_open0(rng).ln() < d
}

/// Random-walk MH on `[lower, upper]` for an arbitrary log-likelihood.
pub fn mh_sample(
    config: &ChainConfig,
    seed: u64,
    mut log_lik: impl FnMut(f64) -> Result<f64>,
) -> Result<ExponentChain> {
    if !(config.lower < config.upper) || !(config.proposal_std > 0.0) {
        return Err(Error::invalid("chain needs lower < upper and a positive proposal std"));
    }
    if !(config.initial >= config.lower && config.initial <= config.upper) {
        return Err(Error::invalid(format!(
            "initial value {} outside [{}, {}]",
            config.initial, config.lower, config.upper
        )));
    }
    if config.burn_in > config.iterations {
        return Err(Error::invalid("burn-in exceeds the iteration count"));
    }
    let mut r = rng::seeded(seed, rng::stream::MH);
    let mut p = config.initial;
    let mut ll = log_lik(p)?;
    if ll == f64::NEG_INFINITY || ll.is_nan() {
        return Err(Error::Initialization(format!(
            "log-likelihood is {ll} at the initial value {p}; start elsewhere"
        )));
    }
    let mut chain = ExponentChain {
        config: *config,
        samples: Vec::with_capacity(config.iterations),
        log_liks: Vec::with_capacity(config.iterations),
        accepted: Vec::with_capacity(config.iterations),
        accept_count: 0,
    };
    for _ in 0..config.iterations {
        let prop = p + config.proposal_std * rng::normal(&mut r);
        let u = rng::uniform_open0(&mut r);
        let mut acc = false;
        if prop >= config.lower && prop <= config.upper {
            let lp = log_lik(prop).unwrap_or(f64::NEG_INFINITY);
            let lp = if lp.is_nan() { f64::NEG_INFINITY } else { lp };
            if lp != f64::NEG_INFINITY && (lp >= ll || u.ln() < lp - ll) {
                p = prop;
                ll = lp;
                acc = true;
            }
        }
        chain.samples.push(p);
        chain.log_liks.push(ll);
        chain.accepted.push(acc);
        chain.accept_count += acc as usize;
    }
    Ok(chain)
}

/// Memoised `p ↦ performance(DWP(p))`, keyed on `p` quantised at 1e-9.
pub struct DwpObjective<'a> {
    evaluator: &'a PerformanceEvaluator<'a>,
    memo: BTreeMap<i64, Result<f64>>,
}

impl<'a> DwpObjective<'a> {
    pub fn new(evaluator: &'a PerformanceEvaluator<'a>) -> Self {
        DwpObjective {
            evaluator,
            memo: BTreeMap::new(),
        }
    }

    pub fn performance(&mut self, p: f64) -> Result<f64> {
        let key = (p * 1e9).round() as i64;
        let ev = self.evaluator;
        self.memo
            .entry(key)
            .or_insert_with(|| ev.evaluate(&mut DiversityWeighted { p }))
            .clone()
    }

    pub fn cache_len(&self) -> usize {
        self.memo.len()
    }
}

/// Brute-force DWP exponent over `[lo, hi]` with spacing `mesh`.
pub fn grid_search_dwp(
    evaluator: &PerformanceEvaluator<'_>,
    lo: f64,
    hi: f64,
    mesh: f64,
) -> Result<GridSearchResult> {
    let mut obj = DwpObjective::new(evaluator);
    grid_search(lo, hi, mesh, |p| obj.performance(p))
}

/// MH over the DWP exponent with log target `log γ(perf(p); a, b)`.
pub fn mh_sample_dwp(
    evaluator: &PerformanceEvaluator<'_>,
    lik: &GammaLikelihood,
    config: &ChainConfig,
    seed: u64,
) -> Result<ExponentChain> {
    let mut obj = DwpObjective::new(evaluator);
    mh_sample(config, seed, |p| Ok(lik.log_density(obj.performance(p)?)))
}

/// Nearest point to `center` (searching outward on a `mesh` lattice inside
/// `[lo, hi]`) where `log_lik` is finite. Used to start chains when the
/// default start has zero likelihood.
pub fn nearest_finite_start(
    lo: f64,
    hi: f64,
    mesh: f64,
    center: f64,
    mut log_lik: impl FnMut(f64) -> f64,
) -> Option<f64> {
    let steps = ((hi - lo) / mesh).ceil() as usize;
    for k in 0..=steps {
        for s in [-1.0, 1.0] {
            let p = center + s * k as f64 * mesh;
            if p >= lo && p <= hi && log_lik(p).is_finite() {
                return Some(p);
            }
            if k == 0 {
                break;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_parameterisation() {
        let g = GammaLikelihood::new(7.0, 0.5).unwrap();
        assert!((g.shape() - 196.0).abs() < 1e-12);
        assert!((g.scale() - 0.25 / 7.0).abs() < 1e-15);
        assert!((g.shape() * g.scale() - 7.0).abs() < 1e-12);
        assert!((g.shape() * g.scale() * g.scale() - 0.25).abs() < 1e-12);
        assert!((g.mode() - 6.964285714285714).abs() < 1e-12);
        assert!(GammaLikelihood::new(0.0, 1.0).is_err());
        assert!(GammaLikelihood::new(1.0, -1.0).is_err());
    }

    #[test]
    fn gamma_non_positive_support() {
        let g = GammaLikelihood::default();
        assert_eq!(g.log_density(0.0), f64::NEG_INFINITY);
        assert_eq!(g.log_density(-3.0), f64::NEG_INFINITY);
        assert_eq!(g.log_density(f64::NAN), f64::NEG_INFINITY);
        let m = g.mode();
        assert!(g.log_density(m) > g.log_density(m + 0.5));
        assert!(g.log_density(m) > g.log_density(m - 0.5));
    }

    #[test]
    fn grid_has_321_points() {
        let g = uniform_grid(-8.0, 8.0, 0.05).unwrap();
        assert_eq!(g.len(), 321);
        assert_eq!(g[160], 0.0);
        assert_eq!(g[0], -8.0);
        assert_eq!(g[320], 8.0);
        let mut count = 0;
        grid_search(-8.0, 8.0, 0.05, |_| {
            count += 1;
            Ok(1.0)
        })
        .unwrap();
        assert_eq!(count, 321);
    }

    #[test]
    fn grid_ties_go_to_smallest_magnitude() {
        let r = grid_search(-8.0, 8.0, 0.05, |_| Ok(3.0)).unwrap();
        assert_eq!(r.best, 0.0);
        let r = grid_search(-1.0, 1.0, 0.5, |p| Ok(-(p * p - 0.25).abs())).unwrap();
        assert_eq!(r.best, -0.5);
    }

    #[test]
    fn grid_skips_failures() {
        let r = grid_search(-1.0, 1.0, 0.5, |p| {
            if p > 0.0 {
                Err(Error::numeric("boom"))
            } else {
                Ok(p)
            }
        })
        .unwrap();
        assert_eq!(r.best, 0.0);
        assert_eq!(r.skipped.len(), 2);
        let all = grid_search(-1.0, 1.0, 0.5, |_| Err(Error::numeric("x")));
        assert!(matches!(all, Err(Error::NoFeasiblePoint(_))));
        assert!(grid_search(1.0, -1.0, 0.5, |_| Ok(0.0)).is_err());
        assert!(grid_search(-1.0, 1.0, 0.0, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn acceptance_rules() {
        assert_eq!(acceptance_probability(0.0, 10.0, false), 0.0);
        assert_eq!(acceptance_probability(-2.0, -2.0, true), 1.0);
        assert!((acceptance_probability(0.0, -1.0, true) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn chain_respects_bounds_and_is_reproducible() {
        let cfg = ChainConfig {
            iterations: 2000,
            burn_in: 500,
            proposal_std: 3.0,
            ..Default::default()
        };
        let a = mh_sample(&cfg, 11, |p| Ok(-0.5 * (p - 7.5) * (p - 7.5))).unwrap();
        let b = mh_sample(&cfg, 11, |p| Ok(-0.5 * (p - 7.5) * (p - 7.5))).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|&p| (-8.0..=8.0).contains(&p)));
        assert_eq!(a.retained().len(), 1500);
        let rate = a.acceptance_rate();
        assert!(rate > 0.0 && rate < 1.0);
    }

    #[test]
    fn chain_rejects_bad_start() {
        let cfg = ChainConfig {
            initial: 9.0,
            ..Default::default()
        };
        assert!(matches!(mh_sample(&cfg, 0, |_| Ok(0.0)), Err(Error::InvalidArgument(_))));
        let cfg = ChainConfig::default();
        assert!(matches!(
            mh_sample(&cfg, 0, |_| Ok(f64::NEG_INFINITY)),
            Err(Error::Initialization(_))
        ));
    }

    #[test]
    fn nearest_finite_start_searches_outward() {
        let p = nearest_finite_start(-8.0, 8.0, 0.05, 0.0, |p| if p < -0.12 { 0.0 } else { f64::NEG_INFINITY });
        assert!((p.unwrap() + 0.15).abs() < 1e-12);
        assert_eq!(nearest_finite_start(-1.0, 1.0, 0.5, 0.0, |_| f64::NEG_INFINITY), None);
    }
}
