//! Synthetic datasets: daily panels from simulated markets, optionally
//! with a planted small-cap premium and a slowly reported quality signal.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::backtest::{CharPanel, Dataset, ReturnsPanel, CAP};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::market::MarketPath;
use crate::math::Real;
use crate::rng;

/// Name of the quality characteristic emitted by [`PlantedPremium`].
pub const ROA: &str = "roa";

/// Day label `YYYY-DDD` with a fixed number of trading days per year.
pub fn day_label(start_year: i32, day: usize, days_per_year: usize) -> String {
    format!(
        "{:04}-{:03}",
        start_year + (day / days_per_year) as i32,
        day % days_per_year + 1
    )
}

/// Daily panel from a path: `r_i(t) = X_i(t)/X_i(t-1) − 1`, with the
/// prior close capitalisation as the `cap` characteristic.
pub fn dataset_from_path(path: &MarketPath, start_year: i32, days_per_year: usize) -> Result<Dataset> {
    let days = path.steps();
    let n = path.n();
    if days == 0 {
        return Err(Error::invalid("path has no steps"));
    }
    let returns = Mat::from_fn(days, n, |t, i| path.caps[(t + 1, i)] / path.caps[(t, i)] - 1.0);
    let mut data = Vec::with_capacity(days * n);
    for t in 0..days {
        data.extend_from_slice(path.caps.row(t));
    }
    let panel = ReturnsPanel::new(
        (0..days).map(|d| day_label(start_year, d, days_per_year)).collect(),
        (0..n).map(|i| format!("asset_{}", i + 1)).collect(),
        returns,
        vec![true; days * n],
    )?;
    Dataset::new(panel, CharPanel::new(vec![CAP.into()], days, n, data)?)
}

/// Independent GBM assets where the asset with the smallest market weight
/// at the prior close earns `premium` extra simple return that day.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPremium {
    pub n: usize,
    pub years: usize,
    pub days_per_year: usize,
    pub start_year: i32,
    /// Annual drift and volatility shared by all assets.
    pub drift: f64,
    pub vol: f64,
    /// Extra daily return of the smallest asset (5 bps = 0.0005).
    pub premium: f64,
    /// Initial caps are log-spaced between 1 and `cap_spread`.
    pub cap_spread: f64,
    /// Extra daily return per unit of latent quality.
    pub quality_premium: f64,
    /// Days between quality reports.
    pub report_every: usize,
    pub seed: u64,
}

impl Default for PlantedPremium {
    fn default() -> Self {
        PlantedPremium {
            n: 10,
            years: 10,
            days_per_year: 252,
            start_year: 1992,
            drift: 0.05,
            vol: 0.3,
            premium: 0.0005,
            cap_spread: 20.0,
            quality_premium: 0.0,
            report_every: 63,
            seed: 0,
        }
    }
}

impl PlantedPremium {
    /// Characteristics: `cap` (prior close) and `roa` (last reported
    /// quality, forward-filled between report days).
    pub fn generate(&self) -> Result<Dataset> {
        let n = self.n;
        if n < 2 || self.years == 0 || self.days_per_year == 0 {
            return Err(Error::invalid("need n >= 2 and a positive horizon"));
        }
        if self.report_every == 0 {
            return Err(Error::invalid("report_every must be positive"));
        }
        let days = self.years * self.days_per_year;
        let dt = 1.0 / self.days_per_year as f64;
        let mut r = rng::seeded(self.seed, rng::stream::SYNTHETIC);
        let mut caps: Vec<f64> = (0..n)
            .map(|i| self.cap_spread.powf(i as f64 / (n - 1) as f64))
            .collect();
        let mut quality: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
        let mut reported: Vec<f64> = quality.iter().map(|q| 0.02 + 0.05 * q).collect();
        let mut returns = Mat::zeros(days, n);
        let mut chars = Vec::with_capacity(days * n * 2);
        let drift = (self.drift - 0.5 * self.vol * self.vol) * dt;
        let shock = self.vol * dt.sqrt();
        for t in 0..days {
            if t > 0 && t % self.report_every == 0 {
                for (q, rep) in quality.iter_mut().zip(reported.iter_mut()) {
                    *q = 0.8 * *q + 0.6 * rng::normal(&mut r);
                    *rep = 0.02 + 0.05 * *q;
                }
            }
            for i in 0..n {
                chars.push(caps[i]);
                chars.push(reported[i]);
            }
            let smallest = (0..n)
                .min_by(|&a, &b| caps[a].total_cmp(&caps[b]))
                .unwrap_or(0);
            for i in 0..n {
                let z = rng::normal(&mut r);
                let mut ret = (drift + shock * z).exp() - 1.0;
                ret += self.quality_premium * quality[i];
                if i == smallest {
                    ret += self.premium;
                }
                let ret = ret.max(-0.99);
                returns[(t, i)] = ret;
                caps[i] *= 1.0 + ret;
            }
        }
        let panel = ReturnsPanel::new(
            (0..days).map(|d| day_label(self.start_year, d, self.days_per_year)).collect(),
            (0..n).map(|i| format!("asset_{}", i + 1)).collect(),
            returns,
            vec![true; days * n],
        )?;
        Dataset::new(panel, CharPanel::new(vec![CAP.into(), ROA.into()], days, n, chars)?)
    }
}
