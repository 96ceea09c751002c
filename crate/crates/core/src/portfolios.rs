//! Long-only portfolio rules.
//!
//! All constructors return weights on the closed unit simplex. Powers of
//! market weights are taken in log space, so exponents up to |p| = 8 are
//! safe on universes where some weights are ~1e-6.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::{log_sum_exp, renormalize, softmax, Real};

/// Entries in `[-NEG_TOL, 0)` produced by a generating function are clamped.
pub const NEG_TOL: f64 = 1e-10;

/// A point on the closed unit simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("empty weight vector"));
        }
        if let Some((i, &x)) = w.iter().enumerate().find(|(_, &x)| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::NotLongOnly { asset: i, weight: x });
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-12 * w.len().max(1) as f64 {
            return Err(Error::domain(format!("weights sum to {s}, not 1")));
        }
        Ok(PortfolioWeights(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl core::ops::Index<usize> for PortfolioWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-asset trading characteristics, `n × d_c`.
pub type Characteristics = Mat;

fn fd_step(x: f64, base: f64) -> f64 {
    let h = base * x.abs().max(1.0);
    // keep the perturbed point inside the positive orthant
    if x > 0.0 {
        h.min(0.5 * x)
    } else {
        h
    }
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let base = f64::EPSILON.cbrt();
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = fd_step(x[i], base);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian of a scalar function.
pub fn fd_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Mat {
    let n = x.len();
    let base = f64::EPSILON.powf(0.25);
    let h: Vec<f64> = x.iter().map(|&xi| fd_step(xi, base)).collect();
    let mut xp = x.to_vec();
    let f0 = f(x);
    let mut hess = Mat::zeros(n, n);
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..n {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// A positive, twice-differentiable function on a neighbourhood of the simplex.
///
/// Only `value` is required; derivatives fall back to central differences.
pub trait GeneratingFunction {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        fd_gradient(|y| self.value(y), x)
    }

    fn hessian(&self, x: &[f64]) -> Mat {
        fd_hessian(|y| self.value(y), x)
    }

    /// `D_i G / G`, overridable where a log-space form is more stable.
    fn log_gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = self.value(x);
        self.gradient(x).into_iter().map(|d| d / g).collect()
    }
}

impl<G: GeneratingFunction + ?Sized> GeneratingFunction for &G {
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> Mat {
        (**self).hessian(x)
    }
    fn log_gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).log_gradient(x)
    }
}

/// `G ≡ c`; generates the market portfolio.
#[derive(Debug, Clone, Copy)]
pub struct ConstantG(pub f64);

impl GeneratingFunction for ConstantG {
    fn value(&self, _x: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
    fn hessian(&self, x: &[f64]) -> Mat {
        Mat::zeros(x.len(), x.len())
    }
}

/// Diversity function `G_p(x) = (Σ x_i^p)^{1/p}`, `p ≠ 0`.
#[derive(Debug, Clone, Copy)]
pub struct DiversityG {
    pub p: f64,
}

impl DiversityG {
    fn log_sum_pow(&self, x: &[f64]) -> f64 {
        let lp: Vec<f64> = x.iter().map(|&xi| self.p * xi.ln()).collect();
        log_sum_exp(&lp)
    }
}

impl GeneratingFunction for DiversityG {
    fn value(&self, x: &[f64]) -> f64 {
        (self.log_sum_pow(x) / self.p).exp()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = self.value(x);
        self.log_gradient(x).into_iter().map(|r| r * g).collect()
    }

    fn log_gradient(&self, x: &[f64]) -> Vec<f64> {
        // D_i G / G = x_i^{p-1} / Σ x_j^p
        let ls = self.log_sum_pow(x);
        x.iter().map(|&xi| ((self.p - 1.0) * xi.ln() - ls).exp()).collect()
    }

    fn hessian(&self, x: &[f64]) -> Mat {
        // D_ij G / G = (1-p) [y_i y_j − δ_ij x_i^{p-2} S] / S²,  y_i = x_i^{p-1}
        let g = self.value(x);
        let ls = self.log_sum_pow(x);
        let r: Vec<f64> = x.iter().map(|&xi| ((self.p - 1.0) * xi.ln() - ls).exp()).collect();
        let n = x.len();
        let q = 1.0 - self.p;
        Mat::from_fn(n, n, |i, j| {
            let mut v = q * r[i] * r[j];
            if i == j {
                v -= q * r[i] / x[i];
            }
            v * g
        })
    }
}

/// Entropy `G(x) = −Σ x_i ln x_i`.
#[derive(Debug, Clone, Copy)]
pub struct EntropyG;

impl GeneratingFunction for EntropyG {
    fn value(&self, x: &[f64]) -> f64 {
        -x.iter().map(|&xi| xi * xi.ln()).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&xi| -(xi.ln() + 1.0)).collect()
    }
    fn hessian(&self, x: &[f64]) -> Mat {
        let n = x.len();
        Mat::from_fn(n, n, |i, j| if i == j { -1.0 / x[i] } else { 0.0 })
    }
}

/// Generating function from a closure; derivatives by finite differences.
pub struct FnG<F>(pub F);

impl<F: Fn(&[f64]) -> f64> GeneratingFunction for FnG<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Generating function on market weights concatenated with `k` covariates.
/// Derivative methods refer to the first `n` (market-weight) variables.
pub trait ExtendedGeneratingFunction {
    fn value(&self, x: &[f64], cov: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], cov: &[f64]) -> Vec<f64> {
        fd_gradient(|y| self.value(y, cov), x)
    }

    fn hessian(&self, x: &[f64], cov: &[f64]) -> Mat {
        fd_hessian(|y| self.value(y, cov), x)
    }

    fn log_gradient(&self, x: &[f64], cov: &[f64]) -> Vec<f64> {
        let h = self.value(x, cov);
        self.gradient(x, cov).into_iter().map(|d| d / h).collect()
    }

    /// `D_{n+l} log H`, one entry per covariate.
    fn covariate_log_gradient(&self, x: &[f64], cov: &[f64]) -> Vec<f64> {
        // log H is not restricted to positive arguments in the covariates,
        // so plain central differences are used.
        let base = f64::EPSILON.cbrt();
        let mut c = cov.to_vec();
        (0..cov.len())
            .map(|l| {
                let h = base * cov[l].abs().max(1.0);
                c[l] = cov[l] + h;
                let up = self.value(x, &c).ln();
                c[l] = cov[l] - h;
                let dn = self.value(x, &c).ln();
                c[l] = cov[l];
                (up - dn) / (2.0 * h)
            })
            .collect()
    }
}

/// `H(x, F) = G(x)`.
pub struct CovariateFree<G>(pub G);

impl<G: GeneratingFunction> ExtendedGeneratingFunction for CovariateFree<G> {
    fn value(&self, x: &[f64], _cov: &[f64]) -> f64 {
        self.0.value(x)
    }
    fn gradient(&self, x: &[f64], _cov: &[f64]) -> Vec<f64> {
        self.0.gradient(x)
    }
    fn hessian(&self, x: &[f64], _cov: &[f64]) -> Mat {
        self.0.hessian(x)
    }
    fn log_gradient(&self, x: &[f64], _cov: &[f64]) -> Vec<f64> {
        self.0.log_gradient(x)
    }
    fn covariate_log_gradient(&self, _x: &[f64], cov: &[f64]) -> Vec<f64> {
        vec![0.0; cov.len()]
    }
}

/// `H(x, F) = exp(Σ_l F_l) · G(x)`; the covariate factor cancels in the weights.
pub struct ExpCovariate<G>(pub G);

impl<G: GeneratingFunction> ExtendedGeneratingFunction for ExpCovariate<G> {
    fn value(&self, x: &[f64], cov: &[f64]) -> f64 {
        cov.iter().sum::<f64>().exp() * self.0.value(x)
    }
    fn gradient(&self, x: &[f64], cov: &[f64]) -> Vec<f64> {
        let s = cov.iter().sum::<f64>().exp();
        self.0.gradient(x).into_iter().map(|g| g * s).collect()
    }
    fn hessian(&self, x: &[f64], cov: &[f64]) -> Mat {
        let s = cov.iter().sum::<f64>().exp();
        let h = self.0.hessian(x);
        Mat::from_fn(h.rows(), h.cols(), |i, j| h[(i, j)] * s)
    }
    fn log_gradient(&self, x: &[f64], _cov: &[f64]) -> Vec<f64> {
        self.0.log_gradient(x)
    }
    fn covariate_log_gradient(&self, _x: &[f64], cov: &[f64]) -> Vec<f64> {
        vec![1.0; cov.len()]
    }
}

/// Diversity function whose exponent moves with the first covariate:
/// `p(F) = base + slope · F_1`.
#[derive(Debug, Clone, Copy)]
pub struct CovariateDiversity {
    pub base: f64,
    pub slope: f64,
}

impl CovariateDiversity {
    fn inner(&self, cov: &[f64]) -> DiversityG {
        DiversityG {
            p: self.base + self.slope * cov.first().copied().unwrap_or(0.0),
        }
    }
}

impl ExtendedGeneratingFunction for CovariateDiversity {
    fn value(&self, x: &[f64], cov: &[f64]) -> f64 {
        self.inner(cov).value(x)
    }
    fn gradient(&self, x: &[f64], cov: &[f64]) -> Vec<f64> {
        self.inner(cov).gradient(x)
    }
    fn hessian(&self, x: &[f64], cov: &[f64]) -> Mat {
        self.inner(cov).hessian(x)
    }
    fn log_gradient(&self, x: &[f64], cov: &[f64]) -> Vec<f64> {
        self.inner(cov).log_gradient(x)
    }
}

/// `1/n` in every asset.
pub fn ewp_weights(n: usize) -> Result<PortfolioWeights> {
    if n == 0 {
        return Err(Error::invalid("equal weights need at least one asset"));
    }
    Ok(PortfolioWeights(vec![1.0 / n as f64; n]))
}

/// Diversity-weighted portfolio `μ_i^p / Σ_j μ_j^p`.
///
/// `p = 1` returns `μ` unchanged and `p = 0` returns equal weights.
pub fn dwp_weights(mu: &[f64], p: f64) -> Result<PortfolioWeights> {
    if !p.is_finite() {
        return Err(Error::invalid("diversity exponent must be finite"));
    }
    if mu.is_empty() {
        return Err(Error::invalid("empty market-weight vector"));
    }
    if let Some(i) = mu.iter().position(|&m| !(m >= 0.0 && m.is_finite())) {
        return Err(Error::domain(format!("market weight of asset {i} is negative or non-finite")));
    }
    if p <= 0.0 {
        if let Some(i) = mu.iter().position(|&m| m <= 0.0) {
            return Err(Error::domain(format!(
                "market weight of asset {i} is zero with non-positive exponent"
            )));
        }
    }
    if p == 1.0 {
        return Ok(PortfolioWeights(mu.to_vec()));
    }
    if p == 0.0 {
        return ewp_weights(mu.len());
    }
    let lw: Vec<f64> = mu
        .iter()
        .map(|&m| if m > 0.0 { p * m.ln() } else { f64::NEG_INFINITY })
        .collect();
    Ok(PortfolioWeights(softmax(&lw)))
}

fn check_open_simplex(mu: &[f64]) -> Result<()> {
    if mu.is_empty() {
        return Err(Error::invalid("empty market-weight vector"));
    }
    if let Some(i) = mu.iter().position(|&m| !(m > 0.0 && m < 1.0 + 1e-12)) {
        if !(mu.len() == 1 && mu[0] == 1.0) {
            return Err(Error::domain(format!("market weight of asset {i} outside (0, 1)")));
        }
    }
    let s: f64 = mu.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("market weights sum to {s}")));
    }
    Ok(())
}

/// `π_i / μ_i = r_i + 1 − Σ_j μ_j r_j` with `r = ∇ log G(μ)`; clamps
/// roundoff negatives and rejects real ones.
fn weights_from_log_gradient(mu: &[f64], r: &[f64]) -> Result<PortfolioWeights> {
    if let Some(i) = r.iter().position(|x| !x.is_finite()) {
        return Err(Error::Evaluation {
            asset: i,
            msg: "non-finite log-gradient of the generating function".into(),
        });
    }
    let avg: f64 = mu.iter().zip(r).map(|(m, x)| m * x).sum();
    let mut w: Vec<f64> = mu.iter().zip(r).map(|(m, x)| m * (x + 1.0 - avg)).collect();
    for (i, x) in w.iter_mut().enumerate() {
        if *x < -NEG_TOL {
            return Err(Error::NotLongOnly { asset: i, weight: *x });
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    renormalize(&mut w);
    Ok(PortfolioWeights(w))
}

/// Functionally-generated portfolio of `G` at market weights `μ`.
pub fn fgp_weights<G: GeneratingFunction + ?Sized>(g: &G, mu: &[f64]) -> Result<PortfolioWeights> {
    check_open_simplex(mu)?;
    let v = g.value(mu);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("generating function value {v} is not positive")));
    }
    weights_from_log_gradient(mu, &g.log_gradient(mu))
}

/// Portfolio generated by `H(μ, F)`; partial derivatives in the first `n`
/// variables only.
pub fn extended_fgp_weights<H: ExtendedGeneratingFunction + ?Sized>(
    h: &H,
    mu: &[f64],
    cov: &[f64],
) -> Result<PortfolioWeights> {
    check_open_simplex(mu)?;
    let v = h.value(mu, cov);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("generating function value {v} is not positive")));
    }
    weights_from_log_gradient(mu, &h.log_gradient(mu, cov))
}

/// Investment-map portfolio `f(x_i) / Σ_j f(x_j)` from `log f`, normalised
/// through log-sum-exp.
pub fn map_portfolio<F>(f_log: F, chars: &Characteristics) -> Result<PortfolioWeights>
where
    F: Fn(&[f64]) -> f64,
{
    let n = chars.rows();
    if n == 0 {
        return Err(Error::invalid("no assets"));
    }
    let mut lw = Vec::with_capacity(n);
    for i in 0..n {
        let v = f_log(chars.row(i));
        if !v.is_finite() {
            return Err(Error::Evaluation {
                asset: i,
                msg: format!("log investment map returned {v}"),
            });
        }
        lw.push(v);
    }
    Ok(PortfolioWeights(softmax(&lw)))
}

/// Log-weights to portfolio over the members only; non-members get zero.
pub fn masked_softmax(logw: &[f64], members: &[bool]) -> Result<PortfolioWeights> {
    let lw: Vec<f64> = logw
        .iter()
        .zip(members)
        .map(|(&x, &m)| if m { x } else { f64::NEG_INFINITY })
        .collect();
    if !members.iter().any(|&m| m) {
        return Err(Error::invalid("no member assets"));
    }
    if let Some(i) = (0..lw.len()).find(|&i| members[i] && !lw[i].is_finite()) {
        return Err(Error::Evaluation {
            asset: i,
            msg: "non-finite log weight".into(),
        });
    }
    Ok(PortfolioWeights(softmax(&lw)))
}
