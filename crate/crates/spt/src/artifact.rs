//! Learned objects as JSON, and the strategies they freeze into.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spt_core::backtest::{DiversityWeighted, Strategy, WealthSeries};
use spt_core::gp::{CharGrid, Feature, GpPosterior, MapStrategy};
use spt_core::inference::{ExponentChain, GridSearchResult};

use crate::error::{Error, Result};
use crate::io;

/// Name used for the log-market-weight coordinate in specs and files.
pub const CAP_FEATURE: &str = "cap";

pub fn feature_from_name(name: &str) -> Feature {
    match name {
        CAP_FEATURE | "log_market_weight" => Feature::LogMarketWeight,
        other => Feature::Characteristic(other.to_string()),
    }
}

pub fn feature_name(f: &Feature) -> String {
    match f {
        Feature::LogMarketWeight => CAP_FEATURE.to_string(),
        Feature::Characteristic(c) => c.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Artifact {
    DwpGrid(GridArtifact),
    DwpMh(ChainArtifact),
    Map(MapArtifact),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridArtifact {
    pub p: f64,
    pub value: f64,
    /// `(p, performance)`; `None` where the backtest failed.
    pub evaluations: Vec<(f64, Option<f64>)>,
    pub skipped: Vec<(f64, String)>,
}

impl From<&GridSearchResult> for GridArtifact {
    fn from(r: &GridSearchResult) -> Self {
        GridArtifact {
            p: r.best,
            value: r.best_value,
            evaluations: r.evaluations.clone(),
            skipped: r.skipped.iter().map(|(p, e)| (*p, e.to_string())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainArtifact {
    pub posterior_mean: f64,
    pub posterior_std: f64,
    pub acceptance_rate: f64,
    pub initial: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub likelihood_mean: f64,
    pub likelihood_std: f64,
    /// Post-burn-in samples of `p`.
    pub samples: Vec<f64>,
}

impl ChainArtifact {
    pub fn new(chain: &ExponentChain, likelihood_mean: f64, likelihood_std: f64) -> Self {
        ChainArtifact {
            posterior_mean: chain.posterior_mean(),
            posterior_std: chain.posterior_std(),
            acceptance_rate: chain.acceptance_rate(),
            initial: chain.config.initial,
            iterations: chain.config.iterations,
            burn_in: chain.config.burn_in,
            likelihood_mean,
            likelihood_std,
            samples: chain.retained().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRecord {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapArtifact {
    pub features: Vec<String>,
    pub knots: Vec<Vec<f64>>,
    pub mean_log_f: Vec<f64>,
    pub sd_log_f: Vec<f64>,
    /// `mean ± 2 sd` per cell.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub hypers: Vec<HyperRecord>,
    pub retained: usize,
    /// Mean likelihood evaluations per ESS update, for the `X` block and
    /// the hyperparameter block.
    pub mean_x_evaluations: f64,
    pub mean_hyper_evaluations: f64,
    pub log_lik_trace: Vec<f64>,
}

fn mean_usize(x: &[usize]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<usize>() as f64 / x.len() as f64
}

impl MapArtifact {
    pub fn new(post: &GpPosterior, features: &[Feature]) -> Self {
        let band = post.credible_band();
        MapArtifact {
            features: features.iter().map(feature_name).collect(),
            knots: post.grid.all_knots().to_vec(),
            mean_log_f: post.mean_log_f.clone(),
            sd_log_f: post.sd_log_f.clone(),
            lower: band.iter().map(|b| b.0).collect(),
            upper: band.iter().map(|b| b.1).collect(),
            hypers: post
                .hyper_summaries()
                .into_iter()
                .map(|h| HyperRecord {
                    name: h.name,
                    mean: h.mean,
                    sd: h.sd,
                })
                .collect(),
            retained: post.retained,
            mean_x_evaluations: mean_usize(&post.x_evaluations),
            mean_hyper_evaluations: mean_usize(&post.hyper_evaluations),
            log_lik_trace: post.log_lik_trace.clone(),
        }
    }

    pub fn feature_list(&self) -> Vec<Feature> {
        self.features.iter().map(|f| feature_from_name(f)).collect()
    }

    /// Rebuild enough of the posterior to look up the map.
    pub fn posterior(&self) -> Result<GpPosterior> {
        let grid = CharGrid::new(self.knots.clone())?;
        if grid.len() != self.mean_log_f.len() || self.features.len() != grid.dims() {
            return Err(Error::data("map artifact grid does not match its values"));
        }
        Ok(GpPosterior {
            grid,
            mean_log_f: self.mean_log_f.clone(),
            sd_log_f: self.sd_log_f.clone(),
            retained: self.retained,
            hyper_samples: Vec::new(),
            x_samples: Vec::new(),
            log_lik_trace: Vec::new(),
            x_evaluations: Vec::new(),
            hyper_evaluations: Vec::new(),
        })
    }

    /// Knot coordinates of every cell, row-major over the grid.
    pub fn cell_coords(&self) -> Result<Vec<Vec<f64>>> {
        let grid = CharGrid::new(self.knots.clone())?;
        Ok((0..grid.len()).map(|c| grid.cell_coords(c)).collect())
    }
}

/// A frozen, ready-to-backtest rule.
#[derive(Debug, Clone)]
pub enum Frozen {
    Ewp,
    Market,
    Dwp(f64),
    Map { posterior: GpPosterior, features: Vec<Feature> },
}

impl Frozen {
    pub fn from_artifact(a: &Artifact) -> Result<Frozen> {
        Ok(match a {
            Artifact::DwpGrid(g) => Frozen::Dwp(g.p),
            Artifact::DwpMh(c) => Frozen::Dwp(c.posterior_mean),
            Artifact::Map(m) => Frozen::Map {
                posterior: m.posterior()?,
                features: m.feature_list(),
            },
        })
    }

    pub fn backtest(
        &self,
        data: &spt_core::backtest::Dataset,
        config: &spt_core::backtest::BacktestConfig,
    ) -> Result<WealthSeries> {
        let mut s = self.strategy();
        Ok(spt_core::backtest::run_backtest(&mut *s, data, config)?)
    }

    pub fn strategy(&self) -> Box<dyn Strategy + '_> {
        match self {
            Frozen::Ewp => Box::new(spt_core::backtest::Ewp),
            Frozen::Market => Box::new(spt_core::backtest::MarketPortfolio),
            Frozen::Dwp(p) => Box::new(DiversityWeighted { p: *p }),
            Frozen::Map { posterior, features } => Box::new(MapStrategy { posterior, features }),
        }
    }

    /// The learned exponent, when the rule has one.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Frozen::Dwp(p) => Some(*p),
            _ => None,
        }
    }
}

pub fn save(path: &Path, a: &Artifact) -> Result<()> {
    let w = io::create(path)?;
    serde_json::to_writer_pretty(w, a).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Artifact> {
    serde_json::from_reader(io::open(path)?).map_err(|e| {
        Error::parse(&path.display().to_string(), e.line() as u64, e.to_string())
    })
}
