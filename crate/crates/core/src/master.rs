//! Discrete verification of the master equation
//! `log(V^π(T)/V^μ(T)) = log(G(μ(T))/G(μ(0))) + ∫ 𝔤 dt` and of its
//! covariate-extended form.
//!
//! Conventions: wealth compounds the realised simple returns between grid
//! points (the backtester's convention), `∫ 𝔤 dt` uses the trapezoid rule,
//! and the covariate term is a left-point Stieltjes sum. The residual then
//! measures discretisation error only.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::market::{relative_covariance_from_cov, simulate_from_draws, BrownianDraws, MarketParams, MarketPath, RelativeCovariance};
use crate::math::Real;
use crate::portfolios::{extended_fgp_weights, fgp_weights, ExtendedGeneratingFunction, GeneratingFunction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterDecomposition {
    /// `log(V^π(T) / V^μ(T))`.
    pub lhs: f64,
    /// `log(G(T) / G(0))`.
    pub g_term: f64,
    pub drift_integral: f64,
    /// Zero for the classic equation.
    pub covariate_integral: f64,
    pub residual: f64,
}

/// Covariate values `F_l(t)` on the grid of a [`MarketPath`].
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteVariationPath {
    pub times: Vec<f64>,
    /// `(M+1) × k`.
    pub values: Mat,
}

impl FiniteVariationPath {
    pub fn new(times: Vec<f64>, values: Mat) -> Result<Self> {
        if times.len() != values.rows() {
            return Err(Error::invalid("covariate times and values lengths differ"));
        }
        Ok(FiniteVariationPath { times, values })
    }

    /// Σ_t |ΔF_l| per component.
    pub fn total_variation(&self) -> Vec<f64> {
        let k = self.values.cols();
        (0..k)
            .map(|l| {
                (1..self.values.rows())
                    .map(|t| (self.values[(t, l)] - self.values[(t - 1, l)]).abs())
                    .sum()
            })
            .collect()
    }
}

/// `𝔤 = −Σ_ij D²_ij G / (2G) μ_i μ_j τ_ij`.
pub fn drift_process<G: GeneratingFunction + ?Sized>(
    g: &G,
    mu: &[f64],
    tau: &RelativeCovariance,
) -> Result<f64> {
    let v = g.value(mu);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain("generating function value is not positive"));
    }
    drift_from_parts(v, &g.hessian(mu), mu, tau.matrix())
}

fn drift_from_parts(value: f64, hess: &Mat, mu: &[f64], tau: &Mat) -> Result<f64> {
    let n = mu.len();
    if hess.rows() != n || tau.rows() != n {
        return Err(Error::invalid("dimension mismatch in drift computation"));
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += hess[(i, j)] * mu[i] * mu[j] * tau[(i, j)];
        }
    }
    let d = -acc / (2.0 * value);
    if !d.is_finite() {
        return Err(Error::Evaluation {
            asset: 0,
            msg: "non-finite drift (Hessian unavailable or degenerate)".into(),
        });
    }
    Ok(d)
}

/// What the shared decomposition loop needs at a grid point.
struct PointEval {
    weights: Vec<f64>,
    value: f64,
    hessian: Mat,
    cov_log_grad: Vec<f64>,
}

fn decompose(
    path: &MarketPath,
    vol: &Mat,
    covariates: Option<&FiniteVariationPath>,
    mut eval: impl FnMut(usize, &[f64]) -> Result<PointEval>,
) -> Result<MasterDecomposition> {
    let n = path.n();
    if vol.rows() != n {
        return Err(Error::invalid("volatility rows do not match the path"));
    }
    if path.times.len() < 2 {
        return Err(Error::invalid("path needs at least two points"));
    }
    let a = vol.gram();
    let steps = path.steps();
    let mut lhs = 0.0;
    let mut drift_integral = 0.0;
    let mut covariate_integral = 0.0;
    let mut prev_drift = 0.0;
    let mut first_value = 0.0;
    let mut last_value = 0.0;
    for k in 0..=steps {
        let mu = path.weights.row(k);
        let pe = eval(k, mu).map_err(|e| e.at_step(k))?;
        if !(pe.value > 0.0 && pe.value.is_finite()) {
            return Err(Error::domain("generating function value is not positive").at_step(k));
        }
        let tau = relative_covariance_from_cov(&a, mu)?;
        let drift = drift_from_parts(pe.value, &pe.hessian, mu, tau.matrix()).map_err(|e| e.at_step(k))?;
        if k == 0 {
            first_value = pe.value;
        } else {
            let dt = path.times[k] - path.times[k - 1];
            drift_integral += 0.5 * dt * (prev_drift + drift);
        }
        prev_drift = drift;
        last_value = pe.value;
        if k < steps {
            let x0 = path.caps.row(k);
            let x1 = path.caps.row(k + 1);
            let mut rp = 0.0;
            let mut rm = 0.0;
            for i in 0..n {
                let r = x1[i] / x0[i] - 1.0;
                rp += pe.weights[i] * r;
                rm += mu[i] * r;
            }
            lhs += rp.ln_1p() - rm.ln_1p();
            if let Some(f) = covariates {
                for (l, d) in pe.cov_log_grad.iter().enumerate() {
                    covariate_integral += d * (f.values[(k + 1, l)] - f.values[(k, l)]);
                }
            }
        }
    }
    let g_term = (last_value / first_value).ln();
    Ok(MasterDecomposition {
        lhs,
        g_term,
        drift_integral,
        covariate_integral,
        residual: lhs - (g_term + drift_integral - covariate_integral),
    })
}

/// Decompose the relative log-wealth of the portfolio generated by `G`
/// along `path`, which must have been driven by volatility `vol`.
pub fn verify_master<G: GeneratingFunction + ?Sized>(
    g: &G,
    path: &MarketPath,
    vol: &Mat,
) -> Result<MasterDecomposition> {
    decompose(path, vol, None, |_, mu| {
        Ok(PointEval {
            weights: fgp_weights(g, mu)?.into_vec(),
            value: g.value(mu),
            hessian: g.hessian(mu),
            cov_log_grad: Vec::new(),
        })
    })
}

/// Extended decomposition with covariates `F` on the same grid.
pub fn verify_extended_master<H: ExtendedGeneratingFunction + ?Sized>(
    h: &H,
    path: &MarketPath,
    covariates: &FiniteVariationPath,
    vol: &Mat,
) -> Result<MasterDecomposition> {
    if covariates.times.len() != path.times.len()
        || covariates.times.iter().zip(&path.times).any(|(a, b)| a != b)
    {
        return Err(Error::invalid("covariate grid does not match the market path"));
    }
    decompose(path, vol, Some(covariates), |k, mu| {
        let f = covariates.values.row(k);
        Ok(PointEval {
            weights: extended_fgp_weights(h, mu, f)?.into_vec(),
            value: h.value(mu, f),
            hessian: h.hessian(mu, f),
            cov_log_grad: h.covariate_log_gradient(mu, f),
        })
    })
}

/// One row of a refinement study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementLevel {
    pub dt: f64,
    pub decomposition: MasterDecomposition,
}

/// Simulate the finest grid once, then re-run the decomposition on coarser
/// grids built by summing the same Brownian increments. `factors` are
/// coarsening factors relative to `fine_dt` (1 = finest).
pub fn refinement_study<G: GeneratingFunction + ?Sized>(
    g: &G,
    params: &MarketParams,
    horizon: f64,
    fine_dt: f64,
    factors: &[usize],
    seed: u64,
) -> Result<Vec<RefinementLevel>> {
    params.validate()?;
    let steps = (horizon / fine_dt + 1e-9).floor() as usize;
    if steps == 0 {
        return Err(Error::invalid("horizon shorter than the finest step"));
    }
    let fine = BrownianDraws::generate(params.d(), steps, fine_dt, seed);
    factors
        .iter()
        .map(|&f| {
            let draws = fine.coarsen(f)?;
            let path = simulate_from_draws(params, &params.initial_caps, &draws)?;
            Ok(RefinementLevel {
                dt: draws.dt,
                decomposition: verify_master(g, &path, &params.vol)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{relative_covariance, simulate_market};
    use crate::portfolios::{ConstantG, CovariateFree, DiversityG, EntropyG, ExpCovariate};
    use alloc::vec;

    #[test]
    fn drift_of_linear_and_zero_vol_is_zero() {
        let mu = [0.2, 0.3, 0.5];
        let tau = relative_covariance(&Mat::scaled_identity(3, 0.3), &mu).unwrap();
        // G(x) = 1 + x_1 is linear: zero Hessian
        struct Linear;
        impl GeneratingFunction for Linear {
            fn value(&self, x: &[f64]) -> f64 {
                1.0 + x[0]
            }
            fn hessian(&self, x: &[f64]) -> Mat {
                Mat::zeros(x.len(), x.len())
            }
        }
        assert_eq!(drift_process(&Linear, &mu, &tau).unwrap(), 0.0);
        let tau0 = relative_covariance(&Mat::zeros(3, 3), &mu).unwrap();
        assert_eq!(drift_process(&EntropyG, &mu, &tau0).unwrap(), 0.0);
    }

    #[test]
    fn entropy_two_asset_drift_by_hand() {
        // D²G = diag(-2,-2), G = ln 2, τ = [[.5,-.5],[-.5,.5]], μ_iμ_j = .25
        // 𝔤 = -(-2·.25·.5 - 2·.25·.5) / (2 ln 2) = 0.25 / ln 2
        let tau = relative_covariance(&Mat::identity(2), &[0.5, 0.5]).unwrap();
        let d = drift_process(&EntropyG, &[0.5, 0.5], &tau).unwrap();
        assert!((d - 0.25 / core::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn constant_generating_function_decomposes_to_zero() {
        let p = MarketParams::diagonal(3, 0.05, 0.2, vec![1.0, 2.0, 3.0]).unwrap();
        let path = simulate_market(&p, 1.0, 1.0 / 252.0, 1).unwrap();
        let d = verify_master(&ConstantG(2.0), &path, &p.vol).unwrap();
        let tol = 1e-12 * path.steps() as f64;
        assert!(d.lhs.abs() < tol && d.residual.abs() < tol);
        assert_eq!(d.g_term, 0.0);
        assert_eq!(d.drift_integral, 0.0);
        assert_eq!(d.covariate_integral, 0.0);
    }

    #[test]
    fn deterministic_path_residual_is_tiny() {
        let p = MarketParams::new(
            vec![0.05, 0.0, -0.05],
            Mat::zeros(3, 3),
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        let path = simulate_market(&p, 1.0, 1e-4, 0).unwrap();
        let d = verify_master(&DiversityG { p: 0.5 }, &path, &p.vol).unwrap();
        assert_eq!(d.drift_integral, 0.0);
        assert!(d.residual.abs() < 1e-6, "residual {}", d.residual);
    }

    #[test]
    fn extended_matches_classic() {
        let p = MarketParams::diagonal(3, 0.05, 0.2, vec![1.0, 2.0, 3.0]).unwrap();
        let path = simulate_market(&p, 1.0, 1.0 / 252.0, 4).unwrap();
        let g = DiversityG { p: 0.5 };
        let classic = verify_master(&g, &path, &p.vol).unwrap();

        let f_const = FiniteVariationPath::new(path.times.clone(), Mat::zeros(path.times.len(), 1)).unwrap();
        let free = verify_extended_master(&CovariateFree(g), &path, &f_const, &p.vol).unwrap();
        assert_eq!(free, classic);

        let f_time = FiniteVariationPath::new(
            path.times.clone(),
            Mat::from_fn(path.times.len(), 1, |k, _| path.times[k]),
        )
        .unwrap();
        let e = verify_extended_master(&ExpCovariate(g), &path, &f_time, &p.vol).unwrap();
        let horizon = *path.times.last().unwrap();
        assert!((e.covariate_integral - horizon).abs() < 1e-12);
        assert!((e.residual - classic.residual).abs() < 1e-10);

        let short = FiniteVariationPath::new(vec![0.0], Mat::zeros(1, 1)).unwrap();
        assert!(matches!(
            verify_extended_master(&ExpCovariate(g), &path, &short, &p.vol),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn not_long_only_propagates_step() {
        let p = MarketParams::diagonal(2, 0.0, 0.2, vec![1.0, 1.0]).unwrap();
        let path = simulate_market(&p, 0.1, 0.01, 2).unwrap();
        struct Steep;
        impl GeneratingFunction for Steep {
            fn value(&self, x: &[f64]) -> f64 {
                (-10.0 * x[0]).exp()
            }
        }
        let err = verify_master(&Steep, &path, &p.vol).unwrap_err();
        assert!(matches!(err, Error::AtStep { step: 0, .. }));
    }

    #[test]
    fn total_variation_sums_absolute_increments() {
        let f = FiniteVariationPath::new(
            vec![0.0, 1.0, 2.0],
            Mat::from_rows(&[vec![0.0], vec![1.0], vec![-1.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(f.total_variation(), vec![3.0]);
    }
}
