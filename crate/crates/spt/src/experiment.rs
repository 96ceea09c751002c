//! Rolling train/test protocol: learn on each training window, freeze the
//! learned rule, and evaluate it on the following test window.

use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spt_core::backtest::{
    sharpe_ratio, BacktestConfig, Dataset, PerformanceEvaluator, PerformanceKind, WealthSeries,
};
use spt_core::gp::{GibbsConfig, MapLearner};
use spt_core::inference::{grid_search_dwp, mh_sample, nearest_finite_start, ChainConfig, DwpObjective};

use crate::artifact::{self, feature_from_name, Artifact, ChainArtifact, Frozen, GridArtifact, MapArtifact};
use crate::config::{ExperimentConfig, LearnSettings, StrategyEntry};
use crate::error::{Error, Result};
use crate::io;
use crate::rule::Rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub train_years: u32,
    pub test_years: u32,
    pub roll_step_years: u32,
    /// First training year; defaults to the first year in the data.
    pub start_year: Option<i32>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            train_years: 10,
            test_years: 5,
            roll_step_years: 1,
            start_year: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    /// Day ranges into the full panel.
    pub train: Range<usize>,
    pub test: Range<usize>,
    pub train_years: Range<i32>,
    pub test_years: Range<i32>,
}

/// Leading four digits of a date label.
pub fn year_of(date: &str) -> Result<i32> {
    date.get(..4)
        .and_then(|y| y.parse().ok())
        .ok_or_else(|| Error::data(format!("date `{date}` does not start with a four-digit year")))
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.train_years == 0 || self.test_years == 0 || self.roll_step_years == 0 {
            return Err(Error::usage("plan windows and roll step must be positive"));
        }
        Ok(())
    }

    /// Folds over `dates` plus warnings for skipped windows.
    pub fn folds(&self, dates: &[String]) -> Result<(Vec<Fold>, Vec<String>)> {
        self.validate()?;
        let years: Vec<i32> = dates.iter().map(|d| year_of(d)).collect::<Result<_>>()?;
        let (Some(&first), Some(&last)) = (years.first(), years.last()) else {
            return Err(Error::data("empty panel"));
        };
        if years.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::data("dates are not in year order"));
        }
        let span = |ys: Range<i32>| {
            let a = years.partition_point(|&y| y < ys.start);
            let b = years.partition_point(|&y| y < ys.end);
            a..b
        };
        let start = self.start_year.unwrap_or(first);
        let (tr, te, step) = (self.train_years as i32, self.test_years as i32, self.roll_step_years as i32);
        let mut folds = Vec::new();
        let mut warnings = Vec::new();
        let mut k = 0;
        while start + k * step + tr + te <= last + 1 {
            let s = start + k * step;
            let train_years = s..s + tr;
            let test_years = s + tr..s + tr + te;
            let train = span(train_years.clone());
            let test = span(test_years.clone());
            let covered = |ys: &Range<i32>| ys.clone().all(|y| years.binary_search(&y).is_ok());
            if train.is_empty() || test.is_empty() || !covered(&train_years) || !covered(&test_years) {
                warnings.push(format!(
                    "fold {k} ({}-{} / {}-{}) skipped: missing years of data",
                    train_years.start,
                    train_years.end - 1,
                    test_years.start,
                    test_years.end - 1
                ));
            } else {
                // windows never overlap
                if dates[train.end - 1] >= dates[test.start] {
                    return Err(Error::data(format!("fold {k}: training data is not strictly before test data")));
                }
                folds.push(Fold {
                    index: folds.len(),
                    train,
                    test,
                    train_years,
                    test_years,
                });
            }
            k += 1;
        }
        if folds.is_empty() {
            return Err(Error::data(format!(
                "no complete fold: need {} years from {start}, data covers {first}-{last}",
                tr + te
            )));
        }
        Ok((folds, warnings))
    }
}

/// Learn a rule on `train`. Fixed rules come back unchanged; the artifact
/// is `None` for them.
pub fn learn(
    rule: &Rule,
    train: &Dataset,
    config: &BacktestConfig,
    settings: &LearnSettings,
    seed: u64,
) -> Result<(Frozen, Option<Artifact>)> {
    let eval = || PerformanceEvaluator::new(train, *config, PerformanceKind::ExcessReturnVsEwp);
    Ok(match rule {
        Rule::Ewp => (Frozen::Ewp, None),
        Rule::Market => (Frozen::Market, None),
        Rule::Dwp { p } => (Frozen::Dwp(*p), None),
        Rule::Map { artifact } => {
            let a = artifact::load(artifact)?;
            (Frozen::from_artifact(&a)?, None)
        }
        Rule::DwpGrid => {
            let g = &settings.grid;
            let r = grid_search_dwp(&eval()?, g.lo, g.hi, g.mesh)?;
            let a = Artifact::DwpGrid(GridArtifact::from(&r));
            (Frozen::from_artifact(&a)?, Some(a))
        }
        Rule::DwpMh => {
            let (a, _) = learn_mh(train, config, settings, seed)?;
            (Frozen::from_artifact(&a)?, Some(a))
        }
        Rule::Gp { features } => {
            let mut learner = MapLearner::new(
                features.iter().map(|f| feature_from_name(f)).collect(),
                settings.likelihood.gamma()?,
            );
            learner.backtest = *config;
            learner.sizes = settings.gp.sizes.clone();
            learner.gibbs = GibbsConfig {
                iterations: settings.gp.iterations,
                burn_in: settings.gp.burn_in,
                ..GibbsConfig::default()
            };
            let post = learner.learn(train, seed)?;
            let a = Artifact::Map(MapArtifact::new(&post, &learner.features));
            (Frozen::from_artifact(&a)?, Some(a))
        }
    })
}

/// MH over the DWP exponent; also returns the full chain for dumping.
pub fn learn_mh(
    train: &Dataset,
    config: &BacktestConfig,
    settings: &LearnSettings,
    seed: u64,
) -> Result<(Artifact, spt_core::inference::ExponentChain)> {
    let ev = PerformanceEvaluator::new(train, *config, PerformanceKind::ExcessReturnVsEwp)?;
    let lik = settings.likelihood.gamma()?;
    let mut obj = DwpObjective::new(&ev);
    let (m, g) = (settings.mh, settings.grid);
    let mut log_lik = |p: f64| obj.performance(p).map_or(f64::NEG_INFINITY, |v| lik.log_density(v));
    let initial = nearest_finite_start(g.lo, g.hi, g.mesh, m.initial, &mut log_lik).ok_or_else(|| {
        spt_core::error::Error::Initialization(String::from(
            "the likelihood is zero at every grid point; no strategy beats equal weights",
        ))
    })?;
    let cfg = ChainConfig {
        iterations: m.iterations,
        burn_in: m.burn_in,
        proposal_std: m.proposal_std,
        lower: g.lo,
        upper: g.hi,
        initial,
    };
    let chain = mh_sample(&cfg, seed, |p| Ok(log_lik(p)))?;
    Ok((Artifact::DwpMh(ChainArtifact::new(&chain, lik.mean(), lik.std())), chain))
}

/// Wealth series without the per-day weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthRecord {
    pub initial_wealth: f64,
    pub entry_cost: f64,
    pub wealth: Vec<f64>,
    pub returns: Vec<f64>,
    pub turnover: Vec<f64>,
    pub costs: Vec<f64>,
    pub bankrupt_at: Option<usize>,
}

impl From<&WealthSeries> for WealthRecord {
    fn from(s: &WealthSeries) -> Self {
        WealthRecord {
            initial_wealth: s.initial_wealth,
            entry_cost: s.entry_cost,
            wealth: s.wealth.clone(),
            returns: s.returns.clone(),
            turnover: s.turnover.clone(),
            costs: s.costs.clone(),
            bankrupt_at: s.bankrupt_at,
        }
    }
}

impl WealthRecord {
    pub fn terminal(&self) -> f64 {
        self.wealth.last().copied().unwrap_or(self.initial_wealth)
    }

    /// Annualised return in percent.
    pub fn annual_return_pct(&self, periods_per_year: u32) -> Result<f64> {
        let t = self.returns.len();
        if t == 0 {
            return Err(Error::data("empty wealth series"));
        }
        let vt = self.terminal();
        if !(vt > 0.0) {
            return Ok(-100.0);
        }
        Ok(100.0 * ((vt / self.initial_wealth).powf(periods_per_year as f64 / t as f64) - 1.0))
    }

    pub fn sharpe(&self, periods_per_year: u32) -> Option<f64> {
        sharpe_ratio(&self.returns, periods_per_year).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub name: String,
    pub rule: String,
    /// Learned DWP exponent, when there is one.
    pub exponent: Option<f64>,
    pub is_ret: f64,
    pub oos_ret: f64,
    pub is_sr: Option<f64>,
    pub oos_sr: Option<f64>,
    pub is_terminal: f64,
    pub oos_terminal: f64,
    pub is_turnover: f64,
    pub oos_turnover: f64,
    pub is_wealth: WealthRecord,
    pub oos_wealth: WealthRecord,
    pub artifact: Option<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: Fold,
    pub train_dates: (String, String),
    pub test_dates: (String, String),
    pub results: Vec<StrategyResult>,
}

/// Mean and two standard errors across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanErr {
    pub mean: f64,
    /// `2·sd/√folds`; `None` with fewer than two values.
    pub two_se: Option<f64>,
}

impl MeanErr {
    pub fn of(x: &[f64]) -> Option<MeanErr> {
        if x.is_empty() {
            return None;
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let two_se = (x.len() >= 2).then(|| {
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            2.0 * var.sqrt() / n.sqrt()
        });
        Some(MeanErr { mean, two_se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub is_ret: Option<MeanErr>,
    pub oos_ret: Option<MeanErr>,
    pub oos_sr: Option<MeanErr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Panel dates, for labelling wealth series.
    pub dates: Vec<String>,
    pub folds: Vec<FoldReport>,
    pub aggregates: Vec<Aggregate>,
    pub warnings: Vec<String>,
}

pub fn aggregate(names: &[String], folds: &[FoldReport]) -> Vec<Aggregate> {
    names
        .iter()
        .map(|name| {
            let rows: Vec<&StrategyResult> = folds
                .iter()
                .filter_map(|f| f.results.iter().find(|r| &r.name == name))
                .collect();
            let col = |f: &dyn Fn(&StrategyResult) -> Option<f64>| -> Option<MeanErr> {
                let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                if v.len() < rows.len() {
                    return None;
                }
                MeanErr::of(&v)
            };
            Aggregate {
                name: name.clone(),
                is_ret: col(&|r| Some(r.is_ret)),
                oos_ret: col(&|r| Some(r.oos_ret)),
                oos_sr: col(&|r| r.oos_sr),
            }
        })
        .collect()
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '-' | '_' => c.to_ascii_lowercase(),
            '*' => 's',
            '+' => '_',
            _ => '-',
        })
        .collect()
}

/// Per-job output directory.
pub fn job_dir(out: &Path, fold: usize, name: &str) -> PathBuf {
    out.join(format!("fold_{fold:02}")).join(slug(name))
}

fn run_job(
    entry: &StrategyEntry,
    fold: &Fold,
    data: &Dataset,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<StrategyResult> {
    let rule = entry.parsed()?;
    let bt: BacktestConfig = cfg.backtest.into();
    let train = data.slice(fold.train.clone());
    let test = data.slice(fold.test.clone());
    let seed = cfg.seed.wrapping_add(fold.index as u64);
    let (frozen, art) = learn(&rule, &train, &bt, &cfg.learn, seed)?;
    let is = frozen.backtest(&train, &bt)?;
    let oos = frozen.backtest(&test, &bt)?;
    let is_wealth = WealthRecord::from(&is);
    let oos_wealth = WealthRecord::from(&oos);
    let b = bt.periods_per_year;
    if let Some(dir) = out {
        let dir = job_dir(dir, fold.index, &entry.name);
        io::write_wealth(io::create(&dir.join("is_wealth.csv"))?, &train.panel.dates, &is)?;
        io::write_wealth(io::create(&dir.join("oos_wealth.csv"))?, &test.panel.dates, &oos)?;
        if let Some(a) = &art {
            artifact::save(&dir.join("artifact.json"), a)?;
            if let Artifact::Map(m) = a {
                crate::report::write_map_csv(io::create(&dir.join("map.csv"))?, m)?;
            }
        }
    }
    Ok(StrategyResult {
        name: entry.name.clone(),
        rule: rule.to_string(),
        exponent: frozen.exponent(),
        is_ret: is_wealth.annual_return_pct(b)?,
        oos_ret: oos_wealth.annual_return_pct(b)?,
        is_sr: is_wealth.sharpe(b),
        oos_sr: oos_wealth.sharpe(b),
        is_terminal: is.terminal(),
        oos_terminal: oos.terminal(),
        is_turnover: is.total_turnover(),
        oos_turnover: oos.total_turnover(),
        is_wealth,
        oos_wealth,
        artifact: art,
    })
}

/// Run every configured strategy on every fold. A failing job drops that
/// strategy from the fold with a warning; a fold with no results is
/// skipped; no folds at all is an error.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &Dataset,
    out: Option<&Path>,
    mut progress: impl FnMut(&str),
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (folds, mut warnings) = cfg.plan.folds(&data.panel.dates)?;
    let mut reports = Vec::with_capacity(folds.len());
    for fold in &folds {
        let mut results = Vec::with_capacity(cfg.strategies.len());
        for entry in &cfg.strategies {
            progress(&format!("fold {} / {}: {}", fold.index + 1, folds.len(), entry.name));
            match run_job(entry, fold, data, cfg, out) {
                Ok(r) => results.push(r),
                Err(e @ (Error::Usage(_) | Error::Io { .. })) => return Err(e),
                Err(e) => warnings.push(format!("fold {}: {} failed: {e}", fold.index, entry.name)),
            }
        }
        if results.is_empty() {
            warnings.push(format!("fold {} skipped: every strategy failed", fold.index));
            continue;
        }
        let d = &data.panel.dates;
        reports.push(FoldReport {
            fold: fold.clone(),
            train_dates: (d[fold.train.start].clone(), d[fold.train.end - 1].clone()),
            test_dates: (d[fold.test.start].clone(), d[fold.test.end - 1].clone()),
            results,
        });
    }
    if reports.is_empty() {
        return Err(Error::data("all folds were skipped"));
    }
    let names: Vec<String> = cfg.strategies.iter().map(|s| s.name.clone()).collect();
    let aggregates = aggregate(&names, &reports);
    let report = ExperimentReport {
        config: cfg.clone(),
        dates: data.panel.dates.clone(),
        folds: reports,
        aggregates,
        warnings,
    };
    if let Some(dir) = out {
        save_report(&dir.join("experiment.json"), &report)?;
    }
    Ok(report)
}

pub fn save_report(path: &Path, r: &ExperimentReport) -> Result<()> {
    serde_json::to_writer(io::create(path)?, r).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    serde_json::from_reader(io::open(path)?)
        .map_err(|e| Error::parse(&path.display().to_string(), e.line() as u64, e.to_string()))
}
