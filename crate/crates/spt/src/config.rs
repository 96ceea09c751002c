//! TOML configuration for experiments. Every random choice is driven by an
//! explicit seed from here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spt_core::backtest::BacktestConfig;
use spt_core::gp::GibbsConfig;
use spt_core::inference::{ChainConfig, GammaLikelihood};
use spt_core::synthetic::PlantedPremium;

use crate::error::{Error, Result};
use crate::experiment::ExperimentPlan;
use crate::io::{self, IngestOptions, Ingested};
use crate::rule::Rule;

/// Output directory override.
pub const OUT_DIR_ENV: &str = "SPT_OUT_DIR";

/// `--out`, then `$SPT_OUT_DIR`, then `./out`.
pub fn out_dir(cli: Option<&Path>) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synthetic {
    pub n: usize,
    pub years: usize,
    pub days_per_year: usize,
    pub start_year: i32,
    pub drift: f64,
    pub vol: f64,
    pub premium: f64,
    pub cap_spread: f64,
    pub quality_premium: f64,
    pub report_every: usize,
    pub seed: u64,
}

impl Default for Synthetic {
    fn default() -> Self {
        Synthetic::from(&PlantedPremium::default())
    }
}

impl From<&PlantedPremium> for Synthetic {
    fn from(p: &PlantedPremium) -> Self {
        Synthetic {
            n: p.n,
            years: p.years,
            days_per_year: p.days_per_year,
            start_year: p.start_year,
            drift: p.drift,
            vol: p.vol,
            premium: p.premium,
            cap_spread: p.cap_spread,
            quality_premium: p.quality_premium,
            report_every: p.report_every,
            seed: p.seed,
        }
    }
}

impl From<&Synthetic> for PlantedPremium {
    fn from(s: &Synthetic) -> Self {
        PlantedPremium {
            n: s.n,
            years: s.years,
            days_per_year: s.days_per_year,
            start_year: s.start_year,
            drift: s.drift,
            vol: s.vol,
            premium: s.premium,
            cap_spread: s.cap_spread,
            quality_premium: s.quality_premium,
            report_every: s.report_every,
            seed: s.seed,
        }
    }
}

/// Either a synthetic panel or files on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub synthetic: Option<Synthetic>,
    pub returns: Option<PathBuf>,
    pub characteristics: Option<PathBuf>,
    pub membership: Option<PathBuf>,
    pub lag_days: Option<usize>,
}

impl DataSource {
    /// Relative paths are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<Ingested> {
        match (&self.synthetic, &self.returns) {
            (Some(s), None) => Ok(Ingested {
                data: PlantedPremium::from(s).generate()?,
                warnings: Vec::new(),
            }),
            (None, Some(r)) => {
                let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
                let chars = self.characteristics.as_ref().map(abs);
                let members = self.membership.as_ref().map(abs);
                io::ingest_panel(
                    &abs(r),
                    chars.as_deref(),
                    members.as_deref(),
                    IngestOptions {
                        lag_days: self.lag_days.unwrap_or(1),
                    },
                )
            }
            _ => Err(Error::usage("[data] needs exactly one of `synthetic` or `returns`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Costs {
    pub tc_rate: f64,
    pub periods_per_year: u32,
    pub initial_wealth: f64,
    pub charge_entry: bool,
}

impl Default for Costs {
    fn default() -> Self {
        let c = BacktestConfig::default();
        Costs {
            tc_rate: c.tc_rate,
            periods_per_year: c.periods_per_year,
            initial_wealth: c.initial_wealth,
            charge_entry: c.charge_entry,
        }
    }
}

impl From<Costs> for BacktestConfig {
    fn from(c: Costs) -> Self {
        BacktestConfig {
            tc_rate: c.tc_rate,
            periods_per_year: c.periods_per_year,
            initial_wealth: c.initial_wealth,
            charge_entry: c.charge_entry,
        }
    }
}

/// Gamma likelihood on the training performance (excess terminal wealth
/// over equal weights).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Likelihood {
    pub mean: f64,
    pub std: f64,
}

impl Default for Likelihood {
    fn default() -> Self {
        let g = GammaLikelihood::default();
        Likelihood {
            mean: g.mean(),
            std: g.std(),
        }
    }
}

impl Likelihood {
    pub fn gamma(&self) -> Result<GammaLikelihood> {
        Ok(GammaLikelihood::new(self.mean, self.std)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    pub lo: f64,
    pub hi: f64,
    pub mesh: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            lo: -8.0,
            hi: 8.0,
            mesh: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_std: f64,
    /// Start here, or at the nearest grid point with finite likelihood.
    pub initial: f64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        let c = ChainConfig::default();
        ChainSettings {
            iterations: c.iterations,
            burn_in: c.burn_in,
            proposal_std: c.proposal_std,
            initial: c.initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSettings {
    pub iterations: usize,
    pub burn_in: usize,
    /// Knots per feature; empty selects the learner default.
    pub sizes: Vec<usize>,
}

impl Default for GpSettings {
    fn default() -> Self {
        let g = GibbsConfig::default();
        GpSettings {
            iterations: g.iterations,
            burn_in: g.burn_in,
            sizes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LearnSettings {
    pub likelihood: Likelihood,
    pub grid: GridSettings,
    pub mh: ChainSettings,
    pub gp: GpSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub name: String,
    pub rule: String,
}

impl StrategyEntry {
    pub fn new(name: &str, rule: &str) -> Self {
        StrategyEntry {
            name: name.to_string(),
            rule: rule.to_string(),
        }
    }

    pub fn parsed(&self) -> Result<Rule> {
        self.rule.parse()
    }
}

/// The six rows of the results tables.
pub fn default_strategies() -> Vec<StrategyEntry> {
    vec![
        StrategyEntry::new("Market", "market"),
        StrategyEntry::new("EWP", "ewp"),
        StrategyEntry::new("DWP*", "dwp-grid"),
        StrategyEntry::new("DWP", "dwp-mh"),
        StrategyEntry::new("CAP", "gp:features=cap"),
        StrategyEntry::new("CAP+ROA", "gp:features=cap+roa"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    #[serde(default)]
    pub plan: ExperimentPlan,
    #[serde(default)]
    pub backtest: Costs,
    #[serde(default)]
    pub learn: LearnSettings,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyEntry>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, file: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| 1 + text[..s.start.min(text.len())].matches('\n').count() as u64);
            Error::parse(file, line, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::usage("no strategies configured"));
        }
        let mut names: Vec<&str> = self.strategies.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::usage("strategy names must be unique"));
        }
        for s in &self.strategies {
            s.parsed()?;
        }
        self.plan.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\n[data.synthetic]\nyears = 23\n", "x.toml").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.plan, ExperimentPlan::default());
        assert_eq!(cfg.strategies.len(), 6);
        assert_eq!(cfg.learn.likelihood, Likelihood { mean: 7.0, std: 0.5 });
        assert_eq!(cfg.data.synthetic.unwrap().years, 23);
    }

    #[test]
    fn unknown_keys_report_a_line() {
        let e = ExperimentConfig::from_toml("seed = 1\n[data]\nreturn = \"r.csv\"\n", "c.toml").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_rule_is_a_usage_error() {
        let text = "seed = 1\n[data.synthetic]\n[[strategies]]\nname = \"x\"\nrule = \"kelly\"\n";
        assert!(matches!(ExperimentConfig::from_toml(text, "c"), Err(Error::Usage(_))));
    }
}
