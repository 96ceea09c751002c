//! Itô-process equity market: simulation and structural checks.
//!
//! Capitalisations follow `dX_i = X_i (b_i dt + Σ_ν σ_iν dW_ν)`. Paths are
//! produced with the exact log-space step, which keeps every capitalisation
//! strictly positive.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Mat};
use crate::math::Real;
use crate::rng;

/// Constant-coefficient (geometric Brownian motion) market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    /// Rates of return `b_i`, per year.
    pub drifts: Vec<f64>,
    /// Volatility matrix `σ`, `n × d`, per square-root year.
    pub vol: Mat,
    /// Initial capitalisations `X_i(0) > 0`.
    pub initial_caps: Vec<f64>,
}

impl MarketParams {
    pub fn new(drifts: Vec<f64>, vol: Mat, initial_caps: Vec<f64>) -> Result<Self> {
        let p = MarketParams {
            drifts,
            vol,
            initial_caps,
        };
        p.validate()?;
        Ok(p)
    }

    /// `n` assets with common drift and independent volatility `s` (σ = s·I).
    pub fn diagonal(n: usize, drift: f64, s: f64, initial_caps: Vec<f64>) -> Result<Self> {
        Self::new(vec![drift; n], Mat::scaled_identity(n, s), initial_caps)
    }

    pub fn n(&self) -> usize {
        self.drifts.len()
    }

    pub fn d(&self) -> usize {
        self.vol.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::invalid("market needs at least one asset"));
        }
        if self.vol.rows() != n || self.initial_caps.len() != n {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} drifts, {}x{} volatility, {} initial caps",
                n,
                self.vol.rows(),
                self.vol.cols(),
                self.initial_caps.len()
            )));
        }
        if self.d() < n {
            return Err(Error::invalid(format!(
                "Brownian dimension d={} must be at least n={}",
                self.d(),
                n
            )));
        }
        if let Some(i) = self.initial_caps.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid(format!("initial cap of asset {i} must be positive")));
        }
        if !self.drifts.iter().all(|x| x.is_finite()) || !self.vol.is_finite() {
            return Err(Error::invalid("non-finite drift or volatility"));
        }
        Ok(())
    }

    /// Smallest eigenvalue of `σσᵀ`.
    pub fn min_cov_eigenvalue(&self) -> Result<f64> {
        Ok(sym_eigen(&self.vol.gram())?.min_value())
    }
}

/// Time- and state-dependent coefficients. The constant-coefficient
/// [`MarketParams`] implements this; closures can be wrapped in [`FnDynamics`].
///
/// No integrability check is made on user coefficients.
pub trait Dynamics {
    fn n(&self) -> usize;
    fn d(&self) -> usize;
    /// Fill `drift` (length n) and `vol` (n × d) at time `t` given current caps.
    fn coefficients(&self, t: f64, caps: &[f64], drift: &mut [f64], vol: &mut Mat);
}

impl Dynamics for MarketParams {
    fn n(&self) -> usize {
        MarketParams::n(self)
    }

    fn d(&self) -> usize {
        MarketParams::d(self)
    }

    fn coefficients(&self, _t: f64, _caps: &[f64], drift: &mut [f64], vol: &mut Mat) {
        drift.copy_from_slice(&self.drifts);
        vol.clone_from(&self.vol);
    }
}

/// Adapter turning a closure into [`Dynamics`].
pub struct FnDynamics<F> {
    pub n: usize,
    pub d: usize,
    pub f: F,
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(f64, &[f64], &mut [f64], &mut Mat),
{
    fn n(&self) -> usize {
        self.n
    }

    fn d(&self) -> usize {
        self.d
    }

    fn coefficients(&self, t: f64, caps: &[f64], drift: &mut [f64], vol: &mut Mat) {
        (self.f)(t, caps, drift, vol)
    }
}

/// Standard normal draws driving a path: row `k` holds `Z_1..Z_d` for step
/// `k`, drawn in that order. The Brownian increment is `√dt · Z`.
#[derive(Debug, Clone)]
pub struct BrownianDraws {
    pub dt: f64,
    pub z: Mat,
}

impl BrownianDraws {
    pub fn generate(d: usize, steps: usize, dt: f64, seed: u64) -> Self {
        let mut r = rng::seeded(seed, rng::stream::MARKET);
        let mut z = Mat::zeros(steps, d);
        for k in 0..steps {
            rng::fill_normal(&mut r, z.row_mut(k));
        }
        BrownianDraws { dt, z }
    }

    pub fn steps(&self) -> usize {
        self.z.rows()
    }

    /// Aggregate blocks of `factor` consecutive increments so the coarse
    /// path is driven by the same Brownian motion.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::invalid(format!(
                "cannot coarsen {} steps by factor {}",
                self.steps(),
                factor
            )));
        }
        let d = self.z.cols();
        let m = self.steps() / factor;
        let norm = 1.0 / (factor as f64).sqrt();
        let mut z = Mat::zeros(m, d);
        for k in 0..m {
            for j in 0..factor {
                let src = self.z.row(k * factor + j);
                for (o, s) in z.row_mut(k).iter_mut().zip(src) {
                    *o += s;
                }
            }
            z.row_mut(k).iter_mut().for_each(|x| *x *= norm);
        }
        Ok(BrownianDraws {
            dt: self.dt * factor as f64,
            z,
        })
    }
}

/// Simulated or observed capitalisations with their market weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub times: Vec<f64>,
    pub caps: Mat,
    pub weights: Mat,
}

impl MarketPath {
    pub fn from_caps(times: Vec<f64>, caps: Mat) -> Result<Self> {
        if times.len() != caps.rows() {
            return Err(Error::invalid("times and caps lengths differ"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times must be strictly increasing"));
        }
        let mut weights = Mat::zeros(caps.rows(), caps.cols());
        for k in 0..caps.rows() {
            let w = market_weights(caps.row(k)).map_err(|e| e.at_step(k))?;
            weights.row_mut(k).copy_from_slice(&w);
        }
        Ok(MarketPath {
            times,
            caps,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.caps.cols()
    }

    /// Number of steps `M` (the path has `M + 1` points).
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.as_slice().iter().copied().fold(0.0, f64::max)
    }
}

fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt must be positive"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) || horizon < dt * (1.0 - 1e-12) {
        return Err(Error::invalid("horizon must be positive and at least dt"));
    }
    Ok((horizon / dt + 1e-9).floor() as usize)
}

/// Simulate the constant-coefficient market over `[0, horizon]`.
pub fn simulate_market(params: &MarketParams, horizon: f64, dt: f64, seed: u64) -> Result<MarketPath> {
    params.validate()?;
    let steps = step_count(horizon, dt)?;
    let draws = BrownianDraws::generate(params.d(), steps, dt, seed);
    simulate_from_draws(params, &params.initial_caps, &draws)
}

/// Simulate general dynamics with a fresh seeded draw stream.
pub fn simulate_dynamics<D: Dynamics>(
    dynamics: &D,
    initial_caps: &[f64],
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<MarketPath> {
    let steps = step_count(horizon, dt)?;
    let draws = BrownianDraws::generate(dynamics.d(), steps, dt, seed);
    simulate_from_draws(dynamics, initial_caps, &draws)
}

/// Log-Euler recursion driven by explicit draws:
/// `log X_i += (b_i − ½ Σ_ν σ_iν²) dt + Σ_ν σ_iν √dt Z_ν`.
pub fn simulate_from_draws<D: Dynamics>(
    dynamics: &D,
    initial_caps: &[f64],
    draws: &BrownianDraws,
) -> Result<MarketPath> {
    let n = dynamics.n();
    let d = dynamics.d();
    if d < n {
        return Err(Error::invalid("Brownian dimension must be at least n"));
    }
    if initial_caps.len() != n || draws.z.cols() != d {
        return Err(Error::invalid("dimension mismatch between dynamics, caps and draws"));
    }
    if initial_caps.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("initial caps must be positive"));
    }
    let dt = draws.dt;
    let sqdt = dt.sqrt();
    let steps = draws.steps();
    let mut caps = Mat::zeros(steps + 1, n);
    caps.row_mut(0).copy_from_slice(initial_caps);
    let mut logx: Vec<f64> = initial_caps.iter().map(|x| x.ln()).collect();
    let mut drift = vec![0.0; n];
    let mut vol = Mat::zeros(n, d);
    let mut times = Vec::with_capacity(steps + 1);
    times.push(0.0);
    for k in 0..steps {
        let t = k as f64 * dt;
        dynamics.coefficients(t, caps.row(k), &mut drift, &mut vol);
        let z = draws.z.row(k);
        for i in 0..n {
            let s = vol.row(i);
            let var: f64 = s.iter().map(|x| x * x).sum();
            let shock: f64 = s.iter().zip(z).map(|(a, b)| a * b).sum();
            logx[i] += (drift[i] - 0.5 * var) * dt + shock * sqdt;
        }
        let row = caps.row_mut(k + 1);
        for (c, l) in row.iter_mut().zip(&logx) {
            *c = l.exp();
        }
        times.push((k + 1) as f64 * dt);
    }
    MarketPath::from_caps(times, caps)
}

/// `μ_i = X_i / Σ_j X_j`.
pub fn market_weights(caps: &[f64]) -> Result<Vec<f64>> {
    if caps.is_empty() {
        return Err(Error::domain("no capitalisations"));
    }
    if let Some(i) = caps.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::domain(format!("capitalisation of asset {i} is not positive")));
    }
    let total: f64 = caps.iter().sum();
    Ok(caps.iter().map(|x| x / total).collect())
}

/// Diversity: every market weight on the path stays below `1 − δ`.
pub fn check_diversity(path: &MarketPath, delta: f64) -> Result<bool> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    Ok(path.max_weight() < 1.0 - delta)
}

/// Non-degeneracy: smallest eigenvalue of `σσᵀ` is at least `ε`.
pub fn check_nondegeneracy(vol: &Mat, eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    Ok(sym_eigen(&vol.gram())?.min_value() >= eps)
}

/// Relative covariances, symmetric `n × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeCovariance(pub Mat);

impl RelativeCovariance {
    pub fn matrix(&self) -> &Mat {
        &self.0
    }
}

/// `τ_ij = (μ − e_i)ᵀ σσᵀ (μ − e_j)`.
pub fn relative_covariance(vol: &Mat, mu: &[f64]) -> Result<RelativeCovariance> {
    if vol.rows() != mu.len() {
        return Err(Error::invalid(format!(
            "volatility has {} rows but weight vector has length {}",
            vol.rows(),
            mu.len()
        )));
    }
    relative_covariance_from_cov(&vol.gram(), mu)
}

/// Same as [`relative_covariance`] with `a = σσᵀ` precomputed.
pub fn relative_covariance_from_cov(a: &Mat, mu: &[f64]) -> Result<RelativeCovariance> {
    let n = mu.len();
    if a.rows() != n || a.cols() != n {
        return Err(Error::invalid("covariance and weight dimensions differ"));
    }
    let a_mu = a.matvec(mu)?;
    let mu_a_mu: f64 = mu.iter().zip(&a_mu).map(|(x, y)| x * y).sum();
    let mut tau = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = mu_a_mu - a_mu[i] - a_mu[j] + a[(i, j)];
            tau[(i, j)] = v;
            tau[(j, i)] = v;
        }
    }
    Ok(RelativeCovariance(tau))
}

/// Horizon beyond which the diversity-weighted portfolio with exponent
/// `p ∈ (0,1)` beats the market under diversity and non-degeneracy:
/// `2 ln n / (ε δ p)`. `n` is real-valued for convenience.
pub fn arbitrage_horizon_bound(n: f64, eps: f64, delta: f64, p: f64) -> Result<f64> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Error::invalid("asset count must be at least 1"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p must lie in (0, 1)"));
    }
    Ok(2.0 * n.ln() / (eps * delta * p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_examples() {
        assert_eq!(market_weights(&[1.0; 4]).unwrap(), vec![0.25; 4]);
        let w = market_weights(&[2.0, 3.0, 5.0]).unwrap();
        let expect = [0.2, 0.3, 0.5];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let w2 = market_weights(&[2e9, 3e9, 5e9]).unwrap();
        for (a, b) in w2.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(market_weights(&[1.0, 0.0]).is_err());
        assert!(market_weights(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn zero_noise_single_asset_is_constant() {
        let p = MarketParams::new(vec![0.0], Mat::zeros(1, 1), vec![1.0]).unwrap();
        let path = simulate_market(&p, 2.0, 0.1, 3).unwrap();
        assert!(path.caps.as_slice().iter().all(|&x| x == 1.0));
        assert!(path.weights.as_slice().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_noise_symmetric_pair_stays_even() {
        let p = MarketParams::diagonal(2, 0.03, 0.0, vec![1.0, 1.0]).unwrap();
        let path = simulate_market(&p, 1.0, 1.0 / 252.0, 9).unwrap();
        for k in 0..=path.steps() {
            assert_eq!(path.weights.row(k), &[0.5, 0.5]);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = MarketParams::diagonal(2, 0.0, 0.1, vec![1.0, 1.0]).unwrap();
        assert!(simulate_market(&p, 1.0, 0.0, 1).is_err());
        assert!(simulate_market(&p, -1.0, 0.1, 1).is_err());
        assert!(simulate_market(&p, 0.05, 0.1, 1).is_err());
        let bad = MarketParams::new(vec![0.0; 2], Mat::zeros(2, 1), vec![1.0, 1.0]);
        assert!(matches!(bad, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn diversity_examples() {
        let caps = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let path = MarketPath::from_caps(vec![0.0, 1.0], caps).unwrap();
        assert!(check_diversity(&path, 0.4).unwrap());
        let caps = Mat::from_rows(&[vec![7.0, 3.0], vec![7.0, 3.0]]).unwrap();
        let path = MarketPath::from_caps(vec![0.0, 1.0], caps).unwrap();
        assert!(!check_diversity(&path, 0.4).unwrap());
        assert!(check_diversity(&path, 0.0).is_err());
        assert!(check_diversity(&path, 1.0).is_err());
    }

    #[test]
    fn nondegeneracy_examples() {
        assert!(check_nondegeneracy(&Mat::scaled_identity(3, 0.2), 0.04).unwrap());
        let dup = Mat::from_rows(&[vec![0.1, 0.2], vec![0.1, 0.2]]).unwrap();
        assert!(!check_nondegeneracy(&dup, 1e-12).unwrap());
        assert!(check_nondegeneracy(&dup, 0.0).is_err());
    }

    #[test]
    fn relative_covariance_examples() {
        let tau = relative_covariance(&Mat::zeros(3, 3), &[0.2, 0.3, 0.5]).unwrap();
        assert!(tau.0.as_slice().iter().all(|&x| x == 0.0));
        let tau = relative_covariance(&Mat::identity(2), &[0.5, 0.5]).unwrap();
        let expect = Mat::from_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).unwrap();
        assert!(tau.0.max_abs_diff(&expect) < 1e-15);
        assert!(relative_covariance(&Mat::identity(2), &[1.0]).is_err());
    }

    #[test]
    fn horizon_bound_examples() {
        assert_eq!(arbitrage_horizon_bound(1.0, 0.1, 0.5, 0.5).unwrap(), 0.0);
        let below_one = 1.0 - 1e-12;
        let unit = arbitrage_horizon_bound(core::f64::consts::E, 1.0, below_one, below_one).unwrap();
        assert!((unit - 2.0).abs() < 1e-9);
        let big = arbitrage_horizon_bound(500.0, 0.04, 0.5, 0.5).unwrap();
        assert!((big - 2.0 * 500f64.ln() / 0.01).abs() < 1e-9);
        assert!((big - 1242.92).abs() < 0.01);
        assert!(arbitrage_horizon_bound(10.0, 0.0, 0.5, 0.5).is_err());
        assert!(arbitrage_horizon_bound(10.0, 0.1, 1.0, 0.5).is_err());
        assert!(arbitrage_horizon_bound(10.0, 0.1, 0.5, 0.0).is_err());
    }

    #[test]
    fn coarsened_draws_preserve_brownian_sum() {
        let fine = BrownianDraws::generate(2, 20, 0.01, 5);
        let coarse = fine.coarsen(10).unwrap();
        assert_eq!(coarse.steps(), 2);
        let sum_fine: f64 = (0..10).map(|k| fine.z[(k, 1)] * 0.01f64.sqrt()).sum();
        let sum_coarse = coarse.z[(0, 1)] * 0.1f64.sqrt();
        assert!((sum_fine - sum_coarse).abs() < 1e-14);
        assert!(fine.coarsen(3).is_err());
    }
}
