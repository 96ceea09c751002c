//! Daily wealth accounting with proportional transaction costs, and the
//! performance functionals built on it.
//!
//! Timing: the target for day `t` is decided with information up to the
//! close of day `t-1` and held through day `t`'s return. After the return
//! accrues, holdings drift to `w̃_i = π_i (1 + r_i) / (1 + r)`; rebalancing
//! into the next target trades `Σ_i |π_i(t+1) − w̃_i|` of wealth at cost
//! `tc_rate` per unit notional. So `V(t) = V(t-1)(1 + r(t)) − cost(t)`.
//!
//! The first acquisition from cash is charged before day one when
//! [`BacktestConfig::charge_entry`] is set: `V(0)` is then the wealth left
//! after buying the first target, and `initial_wealth` keeps the amount
//! before it.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::Real;
use crate::portfolios::{dwp_weights, masked_softmax};

/// Name of the capitalisation characteristic used for market weights.
pub const CAP: &str = "cap";

/// Simple per-period returns with universe membership.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub dates: Vec<String>,
    pub asset_ids: Vec<String>,
    /// `T × n`; entries for non-members are ignored.
    pub returns: Mat,
    /// `T × n`, row-major.
    pub membership: Vec<bool>,
}

impl ReturnsPanel {
    pub fn new(dates: Vec<String>, asset_ids: Vec<String>, returns: Mat, membership: Vec<bool>) -> Result<Self> {
        let p = ReturnsPanel {
            dates,
            asset_ids,
            returns,
            membership,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, n) = (self.returns.rows(), self.returns.cols());
        if self.dates.len() != t || self.asset_ids.len() != n || self.membership.len() != t * n {
            return Err(Error::invalid("panel dimensions are inconsistent"));
        }
        for d in 0..t {
            for i in 0..n {
                if self.membership[d * n + i] {
                    let r = self.returns[(d, i)];
                    if !(r >= -1.0 && r.is_finite()) {
                        return Err(Error::invalid(format!(
                            "return {r} of asset {} on {} is below -100% or non-finite",
                            self.asset_ids[i], self.dates[d]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn days(&self) -> usize {
        self.returns.rows()
    }

    pub fn n(&self) -> usize {
        self.returns.cols()
    }

    pub fn members(&self, day: usize) -> &[bool] {
        let n = self.n();
        &self.membership[day * n..(day + 1) * n]
    }

    pub fn slice(&self, days: Range<usize>) -> ReturnsPanel {
        let n = self.n();
        ReturnsPanel {
            dates: self.dates[days.clone()].to_vec(),
            asset_ids: self.asset_ids.clone(),
            returns: Mat::from_fn(days.len(), n, |t, i| self.returns[(days.start + t, i)]),
            membership: self.membership[days.start * n..days.end * n].to_vec(),
        }
    }
}

/// Per-day characteristics, `T × n × k`. Row `t` holds what is known at the
/// close of day `t-1`, i.e. when the day-`t` target is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPanel {
    pub names: Vec<String>,
    days: usize,
    n: usize,
    data: Vec<f64>,
}

impl CharPanel {
    pub fn new(names: Vec<String>, days: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != days * n * names.len() {
            return Err(Error::invalid("characteristic data has the wrong length"));
        }
        Ok(CharPanel { names, days, n, data })
    }

    pub fn empty(days: usize, n: usize) -> Self {
        CharPanel {
            names: Vec::new(),
            days,
            n,
            data: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|x| x == name)
    }

    #[inline]
    pub fn get(&self, day: usize, asset: usize) -> &[f64] {
        let k = self.k();
        let o = (day * self.n + asset) * k;
        &self.data[o..o + k]
    }

    #[inline]
    pub fn value(&self, day: usize, asset: usize, c: usize) -> f64 {
        self.data[(day * self.n + asset) * self.k() + c]
    }

    pub fn set(&mut self, day: usize, asset: usize, c: usize, v: f64) {
        let k = self.k();
        self.data[(day * self.n + asset) * k + c] = v;
    }

    pub fn slice(&self, days: Range<usize>) -> CharPanel {
        let w = self.n * self.k();
        CharPanel {
            names: self.names.clone(),
            days: days.len(),
            n: self.n,
            data: self.data[days.start * w..days.end * w].to_vec(),
        }
    }
}

/// Returns plus characteristics on a common day and asset index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub panel: ReturnsPanel,
    pub chars: CharPanel,
}

impl Dataset {
    pub fn new(panel: ReturnsPanel, chars: CharPanel) -> Result<Self> {
        if chars.days() != panel.days() || chars.n != panel.n() {
            return Err(Error::invalid("characteristics do not match the returns panel"));
        }
        Ok(Dataset { panel, chars })
    }

    pub fn days(&self) -> usize {
        self.panel.days()
    }

    pub fn n(&self) -> usize {
        self.panel.n()
    }

    pub fn slice(&self, days: Range<usize>) -> Dataset {
        Dataset {
            panel: self.panel.slice(days.clone()),
            chars: self.chars.slice(days),
        }
    }

    /// Market weights among day-`t` members from the `cap` characteristic.
    pub fn market_weights(&self, day: usize) -> Result<Vec<f64>> {
        let c = self
            .chars
            .index_of(CAP)
            .ok_or_else(|| Error::invalid("dataset has no `cap` characteristic"))?;
        let members = self.panel.members(day);
        let mut w = vec![0.0; self.n()];
        let mut total = 0.0;
        for (i, &m) in members.iter().enumerate() {
            if m {
                let x = self.chars.value(day, i, c);
                if !(x > 0.0 && x.is_finite()) {
                    return Err(Error::domain(format!(
                        "capitalisation of asset {} on {} is not positive",
                        self.panel.asset_ids[i], self.panel.dates[day]
                    )));
                }
                w[i] = x;
                total += x;
            }
        }
        if total == 0.0 {
            return Err(Error::invalid("no member assets"));
        }
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }
}

/// What a strategy may see when choosing the day-`t` target: membership for
/// day `t`, characteristics known at the prior close, and returns strictly
/// before `t`.
pub struct DayContext<'a> {
    data: &'a Dataset,
    day: usize,
}

impl<'a> DayContext<'a> {
    pub fn day(&self) -> usize {
        self.day
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn members(&self) -> &'a [bool] {
        self.data.panel.members(self.day)
    }

    pub fn chars(&self, asset: usize) -> &'a [f64] {
        self.data.chars.get(self.day, asset)
    }

    pub fn char_index(&self, name: &str) -> Option<usize> {
        self.data.chars.index_of(name)
    }

    pub fn market_weights(&self) -> Result<Vec<f64>> {
        self.data.market_weights(self.day)
    }

    /// Returns of a past day `s < t`.
    pub fn past_returns(&self, s: usize) -> Option<&'a [f64]> {
        (s < self.day).then(|| self.data.panel.returns.row(s))
    }
}

/// Visit every day in order with the context a strategy would see.
pub fn for_each_day(data: &Dataset, mut f: impl FnMut(&DayContext<'_>) -> Result<()>) -> Result<()> {
    for day in 0..data.days() {
        f(&DayContext { data, day })?;
    }
    Ok(())
}

/// A rule mapping available information to target weights (length `n`,
/// zero outside the day's membership).
pub trait Strategy {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>>;
}

impl<S: Strategy + ?Sized> Strategy for Box<S> {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        (**self).target(ctx)
    }
}

impl<S: Strategy + ?Sized> Strategy for &mut S {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        (**self).target(ctx)
    }
}

/// Equal weights over the day's members.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ewp;

impl Strategy for Ewp {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        let members = ctx.members();
        let m = members.iter().filter(|&&x| x).count();
        if m == 0 {
            return Err(Error::invalid("no member assets"));
        }
        let w = 1.0 / m as f64;
        Ok(members.iter().map(|&x| if x { w } else { 0.0 }).collect())
    }
}

/// Capitalisation weights (buy-and-hold index).
#[derive(Debug, Clone, Copy, Default)]
pub struct MarketPortfolio;

impl Strategy for MarketPortfolio {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        ctx.market_weights()
    }
}

/// Diversity-weighted portfolio with exponent `p`.
#[derive(Debug, Clone, Copy)]
pub struct DiversityWeighted {
    pub p: f64,
}

impl Strategy for DiversityWeighted {
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        let mu = ctx.market_weights()?;
        let members = ctx.members();
        let idx: Vec<usize> = (0..mu.len()).filter(|&i| members[i]).collect();
        let sub: Vec<f64> = idx.iter().map(|&i| mu[i]).collect();
        let w = dwp_weights(&sub, self.p)?;
        let mut out = vec![0.0; mu.len()];
        for (k, &i) in idx.iter().enumerate() {
            out[i] = w[k];
        }
        Ok(out)
    }
}

/// Portfolio from per-asset log-weights computed by a closure over the
/// context and asset index.
pub struct LogWeightStrategy<F>(pub F);

impl<F> Strategy for LogWeightStrategy<F>
where
    F: FnMut(&DayContext<'_>, usize) -> Result<f64>,
{
    fn target(&mut self, ctx: &DayContext<'_>) -> Result<Vec<f64>> {
        let members = ctx.members();
        let mut lw = vec![f64::NEG_INFINITY; ctx.n()];
        for i in 0..ctx.n() {
            if members[i] {
                lw[i] = (self.0)(ctx, i)?;
            }
        }
        Ok(masked_softmax(&lw, members)?.into_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BacktestConfig {
    /// Cost per unit of traded notional (10 bps = 0.001).
    pub tc_rate: f64,
    pub periods_per_year: u32,
    pub initial_wealth: f64,
    /// Charge the initial purchase from cash.
    pub charge_entry: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            tc_rate: 0.001,
            periods_per_year: 252,
            initial_wealth: 1.0,
            charge_entry: true,
        }
    }
}

impl BacktestConfig {
    pub fn frictionless() -> Self {
        BacktestConfig {
            tc_rate: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tc_rate >= 0.0 && self.tc_rate.is_finite()) {
            return Err(Error::invalid("tc_rate must be non-negative"));
        }
        if self.periods_per_year == 0 {
            return Err(Error::invalid("periods_per_year must be at least 1"));
        }
        if !(self.initial_wealth > 0.0 && self.initial_wealth.is_finite()) {
            return Err(Error::invalid("initial wealth must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WealthSeries {
    pub initial_wealth: f64,
    pub entry_cost: f64,
    /// `V(0..=T)`; `V(0)` is net of the entry cost.
    pub wealth: Vec<f64>,
    pub returns: Vec<f64>,
    pub turnover: Vec<f64>,
    pub costs: Vec<f64>,
    /// Target weights held during each day, `T × n`.
    pub weights: Mat,
    /// Day on which wealth hit zero; the series stops there.
    pub bankrupt_at: Option<usize>,
}

impl WealthSeries {
    pub fn terminal(&self) -> f64 {
        *self.wealth.last().unwrap_or(&self.initial_wealth)
    }

    pub fn days(&self) -> usize {
        self.returns.len()
    }

    pub fn total_turnover(&self) -> f64 {
        self.turnover.iter().sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.entry_cost + self.costs.iter().sum::<f64>()
    }
}

fn validate_target(w: &[f64], members: &[bool], day: usize) -> Result<()> {
    if w.len() != members.len() {
        return Err(Error::invalid(format!(
            "strategy returned {} weights for {} assets",
            w.len(),
            members.len()
        )));
    }
    let mut s = 0.0;
    for (i, (&x, &m)) in w.iter().zip(members).enumerate() {
        if !m && x != 0.0 {
            return Err(Error::Membership { day, asset: i, weight: x });
        }
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::NotLongOnly { asset: i, weight: x });
        }
        s += x;
    }
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("target weights on day {day} sum to {s}")));
    }
    Ok(())
}

/// Run `strategy` over every day of `data`.
pub fn run_backtest<S: Strategy + ?Sized>(
    strategy: &mut S,
    data: &Dataset,
    config: &BacktestConfig,
) -> Result<WealthSeries> {
    config.validate()?;
    let days = data.days();
    let n = data.n();
    if days == 0 {
        return Err(Error::invalid("empty panel"));
    }
    let target = |s: &mut S, day: usize| -> Result<Vec<f64>> {
        let w = s.target(&DayContext { data, day }).map_err(|e| e.at_step(day))?;
        validate_target(&w, data.panel.members(day), day)?;
        Ok(w)
    };
    let mut pi = target(strategy, 0)?;
    let entry_turnover: f64 = if config.charge_entry { pi.iter().map(|x| x.abs()).sum() } else { 0.0 };
    let entry_cost = config.tc_rate * entry_turnover * config.initial_wealth;
    let mut v = config.initial_wealth - entry_cost;
    let mut series = WealthSeries {
        initial_wealth: config.initial_wealth,
        entry_cost,
        wealth: Vec::with_capacity(days + 1),
        returns: Vec::with_capacity(days),
        turnover: Vec::with_capacity(days),
        costs: Vec::with_capacity(days),
        weights: Mat::zeros(days, n),
        bankrupt_at: None,
    };
    series.wealth.push(v);
    let mut drifted = vec![0.0; n];
    for t in 0..days {
        let r = data.panel.returns.row(t);
        series.weights.row_mut(t).copy_from_slice(&pi);
        let rp: f64 = pi.iter().zip(r).filter(|(w, _)| **w != 0.0).map(|(w, x)| w * x).sum();
        let v_pre = v * (1.0 + rp);
        series.returns.push(rp);
        if !(v_pre > 0.0) {
            series.turnover.push(0.0);
            series.costs.push(0.0);
            series.wealth.push(0.0);
            series.bankrupt_at = Some(t);
            return Ok(series);
        }
        for i in 0..n {
            drifted[i] = if pi[i] != 0.0 { pi[i] * (1.0 + r[i]) / (1.0 + rp) } else { 0.0 };
        }
        let (turnover, cost) = if t + 1 < days {
            let next = target(strategy, t + 1)?;
            let turnover: f64 = next.iter().zip(&drifted).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            (turnover, config.tc_rate * turnover * v_pre)
        } else {
            (0.0, 0.0)
        };
        v = v_pre - cost;
        series.turnover.push(turnover);
        series.costs.push(cost);
        if !(v > 0.0) {
            series.wealth.push(0.0);
            series.bankrupt_at = Some(t);
            return Ok(series);
        }
        series.wealth.push(v);
    }
    Ok(series)
}

/// `√B · mean / sd` with the `T-1` divisor.
pub fn sharpe_ratio(returns: &[f64], periods_per_year: u32) -> Result<f64> {
    let t = returns.len();
    if t < 2 {
        return Err(Error::invalid("Sharpe ratio needs at least two returns"));
    }
    let mean = returns.iter().sum::<f64>() / t as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (t - 1) as f64;
    let sd = var.sqrt();
    // identical returns leave only roundoff in the deviations
    if !(sd > 4.0 * f64::EPSILON * mean.abs()) {
        return Err(Error::UndefinedSharpe);
    }
    Ok((periods_per_year as f64).sqrt() * mean / sd)
}

/// `V^cand(T) − V^bench(T)` on the same data; cost-adjusted when
/// `config.tc_rate > 0`.
pub fn excess_return<A: Strategy + ?Sized, B: Strategy + ?Sized>(
    candidate: &mut A,
    benchmark: &mut B,
    data: &Dataset,
    config: &BacktestConfig,
) -> Result<f64> {
    let a = run_backtest(candidate, data, config)?;
    let b = run_backtest(benchmark, data, config)?;
    Ok(a.terminal() - b.terminal())
}

/// `(V(T) / V_init)^{B/T} − 1`.
pub fn annualize_return(series: &WealthSeries, periods_per_year: u32) -> Result<f64> {
    let t = series.days();
    if t == 0 {
        return Err(Error::invalid("need at least one period"));
    }
    let vt = series.terminal();
    if !(vt > 0.0) {
        return Err(Error::domain("terminal wealth is not positive"));
    }
    Ok((vt / series.initial_wealth).powf(periods_per_year as f64 / t as f64) - 1.0)
}

/// The scalar criterion a learner maximises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerformanceKind {
    /// Terminal wealth minus that of equal weights, costs included.
    #[default]
    ExcessReturnVsEwp,
    SharpeRatio,
}

/// Scores strategies on a fixed dataset; the equal-weight benchmark is run
/// once up front.
pub struct PerformanceEvaluator<'a> {
    pub data: &'a Dataset,
    pub config: BacktestConfig,
    pub kind: PerformanceKind,
    benchmark_terminal: f64,
}

impl<'a> PerformanceEvaluator<'a> {
    pub fn new(data: &'a Dataset, config: BacktestConfig, kind: PerformanceKind) -> Result<Self> {
        let benchmark_terminal = match kind {
            PerformanceKind::ExcessReturnVsEwp => run_backtest(&mut Ewp, data, &config)?.terminal(),
            PerformanceKind::SharpeRatio => 0.0,
        };
        Ok(PerformanceEvaluator {
            data,
            config,
            kind,
            benchmark_terminal,
        })
    }

    pub fn score_series(&self, s: &WealthSeries) -> Result<f64> {
        match self.kind {
            PerformanceKind::ExcessReturnVsEwp => Ok(s.terminal() - self.benchmark_terminal),
            PerformanceKind::SharpeRatio => sharpe_ratio(&s.returns, self.config.periods_per_year),
        }
    }

    pub fn evaluate<S: Strategy + ?Sized>(&self, strategy: &mut S) -> Result<f64> {
        let s = run_backtest(strategy, self.data, &self.config)?;
        self.score_series(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    pub(crate) fn dataset(returns: &[Vec<f64>]) -> Dataset {
        let t = returns.len();
        let n = returns[0].len();
        let panel = ReturnsPanel::new(
            (0..t).map(|d| format!("d{d}")).collect(),
            (0..n).map(|i| format!("a{i}")).collect(),
            Mat::from_rows(returns).unwrap(),
            vec![true; t * n],
        )
        .unwrap();
        Dataset::new(panel, CharPanel::empty(t, n)).unwrap()
    }

    struct Fixed(Vec<f64>);
    impl Strategy for Fixed {
        fn target(&mut self, _: &DayContext<'_>) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn ewp_flat_market() {
        let data = dataset(&vec![vec![0.0; 3]; 5]);
        let s = run_backtest(&mut Ewp, &data, &BacktestConfig::frictionless()).unwrap();
        assert!(s.wealth.iter().all(|&v| v == 1.0));
        assert!(s.turnover.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_asset_compounds() {
        let data = dataset(&[vec![0.01], vec![0.01]]);
        let s = run_backtest(&mut Ewp, &data, &BacktestConfig::frictionless()).unwrap();
        assert!((s.terminal() - 1.0201).abs() < 1e-15);
    }

    #[test]
    fn two_asset_rebalance_cost() {
        let data = dataset(&[vec![0.10, -0.10], vec![0.0, 0.0]]);
        let cfg = BacktestConfig {
            tc_rate: 0.001,
            charge_entry: false,
            ..Default::default()
        };
        let s = run_backtest(&mut Fixed(vec![0.5, 0.5]), &data, &cfg).unwrap();
        assert_eq!(s.returns[0], 0.0);
        assert!((s.turnover[0] - 0.10).abs() < 1e-15);
        assert!((s.costs[0] - 0.0001).abs() < 1e-18);
        assert!((s.wealth[1] - 0.9999).abs() < 1e-15);
        assert_eq!(s.turnover[1], 0.0);
    }

    #[test]
    fn entry_cost_is_charged_by_default() {
        let data = dataset(&[vec![0.0, 0.0]]);
        let s = run_backtest(&mut Ewp, &data, &BacktestConfig::default()).unwrap();
        assert!((s.entry_cost - 0.001).abs() < 1e-18);
        assert!((s.wealth[0] - 0.999).abs() < 1e-15);
        assert_eq!(s.initial_wealth, 1.0);
    }

    #[test]
    fn membership_violation_is_reported() {
        let mut data = dataset(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        data.panel.membership[3] = false;
        let err = run_backtest(&mut Fixed(vec![0.5, 0.5]), &data, &BacktestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Membership { day: 1, asset: 1, .. }));
    }

    #[test]
    fn bankruptcy_stops_series() {
        let data = dataset(&[vec![-1.0], vec![0.5]]);
        let s = run_backtest(&mut Ewp, &data, &BacktestConfig::frictionless()).unwrap();
        assert_eq!(s.bankrupt_at, Some(0));
        assert_eq!(s.terminal(), 0.0);
        assert_eq!(s.days(), 1);
    }

    #[test]
    fn sharpe_examples() {
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert_eq!(sharpe_ratio(&alt, 252).unwrap(), 0.0);
        assert_eq!(sharpe_ratio(&[0.01; 5], 252), Err(Error::UndefinedSharpe));
        assert_eq!(sharpe_ratio(&[0.0; 5], 252), Err(Error::UndefinedSharpe));
        let r = [0.01, 0.02, -0.005, 0.015];
        // mean 0.01, sd = sqrt(3.5e-4/3)
        let sd = (3.5e-4f64 / 3.0).sqrt();
        let expect = 252f64.sqrt() * 0.01 / sd;
        let sr = sharpe_ratio(&r, 252).unwrap();
        assert!((sr - expect).abs() < 1e-12);
        assert!((sr - 14.697).abs() < 1e-3);
        assert!(sharpe_ratio(&[0.1], 252).is_err());
    }

    #[test]
    fn excess_return_examples() {
        let data = dataset(&[vec![0.01, 0.0]]);
        let cfg = BacktestConfig::frictionless();
        let er = excess_return(&mut Fixed(vec![1.0, 0.0]), &mut Fixed(vec![0.0, 1.0]), &data, &cfg).unwrap();
        assert!((er - 0.01).abs() < 1e-15);
        let same = excess_return(&mut Ewp, &mut Ewp, &data, &BacktestConfig::default()).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn annualized_examples() {
        let mk = |v: f64, t: usize| WealthSeries {
            initial_wealth: 1.0,
            entry_cost: 0.0,
            wealth: {
                let mut w = vec![1.0; t];
                w.push(v);
                w
            },
            returns: vec![0.0; t],
            turnover: vec![0.0; t],
            costs: vec![0.0; t],
            weights: Mat::zeros(t, 1),
            bankrupt_at: None,
        };
        assert_eq!(annualize_return(&mk(1.0, 10), 252).unwrap(), 0.0);
        assert!((annualize_return(&mk(2.0, 252), 252).unwrap() - 1.0).abs() < 1e-14);
        let r = annualize_return(&mk(1.5, 504), 252).unwrap();
        assert!((r - (1.5f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!((r - 0.224744).abs() < 1e-6);
        assert!(annualize_return(&mk(0.0, 10), 252).is_err());
    }

    #[test]
    fn panel_rejects_returns_below_minus_one() {
        let r = ReturnsPanel::new(
            vec!["d0".to_string()],
            vec!["a".to_string()],
            Mat::from_rows(&[vec![-1.5]]).unwrap(),
            vec![true],
        );
        assert!(r.is_err());
    }
}
