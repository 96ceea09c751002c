//! Command-line dispatch. Exit codes: 0 success, 1 usage, 2 data, 3 numeric.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use spt_core::backtest::{BacktestConfig, Dataset};
use spt_core::market::{simulate_market, MarketParams};
use spt_core::master::refinement_study;
use spt_core::portfolios::DiversityG;
use spt_core::synthetic::{dataset_from_path, PlantedPremium};

use crate::artifact::{self, Artifact, Frozen};
use crate::config::{self, ChainSettings, ExperimentConfig, GpSettings, LearnSettings, Likelihood};
use crate::error::{Error, Result, EXIT_USAGE};
use crate::experiment::{self, WealthRecord};
use crate::io::{self, IngestOptions};
use crate::report;
use crate::rule::Rule;

#[derive(Debug, Parser)]
#[command(name = "spt", version, about = "Functionally-generated portfolios and learned investment maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a market and write its capitalisations and returns panel.
    Simulate(SimulateArgs),
    /// Backtest a fixed or stored strategy on a returns panel.
    Backtest(BacktestArgs),
    /// Learn a strategy on a returns panel and store the artifact.
    Learn(LearnArgs),
    /// Check the master equation along a simulated path at several step sizes.
    VerifyMaster(VerifyArgs),
    /// Run the rolling train/test experiment from a config file.
    Experiment(ExperimentArgs),
    /// Write tables and plot data from a stored experiment.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    /// Independent geometric Brownian motions.
    Gbm,
    /// GBM with a small-cap premium and a quality characteristic.
    Planted,
}

/// `0.004`, `1e-3` or `1/252`.
fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "1", value_parser = parse_number)]
    pub years: f64,
    #[arg(long, default_value = "1/252", value_parser = parse_number)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub drift: f64,
    #[arg(long, default_value_t = 0.2)]
    pub vol: f64,
    #[arg(long, value_enum, default_value_t = SimKind::Gbm)]
    pub kind: SimKind,
    /// First calendar year of the date labels.
    #[arg(long, default_value_t = 2000)]
    pub start_year: i32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// `date,asset_id,return,member`
    #[arg(long)]
    pub returns: PathBuf,
    /// `date,asset_id,characteristic,value`
    #[arg(long)]
    pub characteristics: Option<PathBuf>,
    /// `date,asset_id,member`; overrides the flags in the returns file.
    #[arg(long)]
    pub membership: Option<PathBuf>,
    /// Trading days between a report date and its first use.
    #[arg(long, default_value_t = 1)]
    pub lag_days: usize,
    /// Proportional transaction cost per unit of turnover.
    #[arg(long, default_value = "0.001", value_parser = parse_number)]
    pub tc: f64,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let ing = io::ingest_panel(
            &self.returns,
            self.characteristics.as_deref(),
            self.membership.as_deref(),
            IngestOptions {
                lag_days: self.lag_days,
            },
        )?;
        for w in &ing.warnings {
            eprintln!("warning: {w}");
        }
        Ok(ing.data)
    }

    fn backtest_config(&self) -> Result<BacktestConfig> {
        if !(self.tc >= 0.0) {
            return Err(Error::usage("--tc must be non-negative"));
        }
        Ok(BacktestConfig {
            tc_rate: self.tc,
            ..BacktestConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `ewp`, `market`, `dwp:p=…` or `map:artifact=…`
    #[arg(long, allow_hyphen_values = true)]
    pub strategy: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    DwpGrid,
    DwpMh,
    Gp,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(value_enum)]
    pub method: Method,
    #[command(flatten)]
    pub data: DataArgs,
    /// Required by the samplers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mean and standard deviation of the Gamma likelihood on excess
    /// terminal wealth.
    #[arg(long, default_value_t = Likelihood::default().mean)]
    pub lik_mean: f64,
    #[arg(long, default_value_t = Likelihood::default().std)]
    pub lik_std: f64,
    /// Features for `gp`, joined with `+`.
    #[arg(long, default_value = "cap")]
    pub features: String,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "1", value_parser = parse_number)]
    pub years: f64,
    /// Finest step.
    #[arg(long, default_value = "1/252", value_parser = parse_number)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub drift: f64,
    #[arg(long, default_value_t = 0.2)]
    pub vol: f64,
    /// Exponent of the diversity generating function.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub p: f64,
    /// Coarsening factors relative to the finest step.
    #[arg(long, value_delimiter = ',', default_value = "12,4,2,1")]
    pub factors: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `experiment.json`, or the directory holding it.
    #[arg(long)]
    pub experiment: PathBuf,
    /// Fold for the single-fold outputs; defaults to the last.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(io::create(path)?, v).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("{what} must be positive")))
    }
}

fn simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let out = config::out_dir(a.out.as_deref());
    positive(a.years, "--years")?;
    positive(a.dt, "--dt")?;
    match a.kind {
        SimKind::Gbm => {
            let params = MarketParams::diagonal(a.n, a.drift, a.vol, vec![1.0; a.n])?;
            let path = simulate_market(&params, a.years, a.dt, a.seed)?;
            let days_per_year = (1.0 / a.dt).round().max(1.0) as usize;
            let data = dataset_from_path(&path, a.start_year, days_per_year)?;
            let files = [out.join("market.csv"), out.join("returns.csv"), out.join("characteristics.csv")];
            io::write_market_path(io::create(&files[0])?, &path)?;
            io::write_dataset(&files[1], &files[2], &data)?;
            Ok(files.to_vec())
        }
        SimKind::Planted => {
            if a.years.fract() != 0.0 {
                return Err(Error::usage("planted panels need a whole number of --years"));
            }
            let data = PlantedPremium {
                n: a.n,
                years: a.years as usize,
                days_per_year: (1.0 / a.dt).round().max(1.0) as usize,
                start_year: a.start_year,
                drift: a.drift,
                vol: a.vol,
                seed: a.seed,
                ..PlantedPremium::default()
            }
            .generate()?;
            let files = [out.join("returns.csv"), out.join("characteristics.csv")];
            io::write_dataset(&files[0], &files[1], &data)?;
            Ok(files.to_vec())
        }
    }
}

fn backtest(a: &BacktestArgs) -> Result<Vec<PathBuf>> {
    let rule: Rule = a.strategy.parse()?;
    let frozen = match &rule {
        Rule::Ewp => Frozen::Ewp,
        Rule::Market => Frozen::Market,
        Rule::Dwp { p } => Frozen::Dwp(*p),
        Rule::Map { artifact } => Frozen::from_artifact(&artifact::load(artifact)?)?,
        _ => {
            return Err(Error::usage(format!(
                "`{rule}` must be trained first; run `spt learn` and pass map:artifact=…"
            )))
        }
    };
    let data = a.data.load()?;
    let cfg = a.data.backtest_config()?;
    let series = frozen.backtest(&data, &cfg)?;
    let ewp = Frozen::Ewp.backtest(&data, &cfg)?;
    let rec = WealthRecord::from(&series);
    let out = config::out_dir(a.out.as_deref());
    let files = [out.join("wealth.csv"), out.join("summary.json")];
    io::write_wealth(io::create(&files[0])?, &data.panel.dates, &series)?;
    let summary = json!({
        "strategy": rule.to_string(),
        "days": data.days(),
        "assets": data.n(),
        "initial_wealth": rec.initial_wealth,
        "terminal_wealth": rec.terminal(),
        "excess_vs_ewp": rec.terminal() - ewp.terminal(),
        "annual_return_pct": rec.annual_return_pct(cfg.periods_per_year)?,
        "sharpe": rec.sharpe(cfg.periods_per_year),
        "total_turnover": series.total_turnover(),
        "total_cost": series.total_cost(),
        "bankrupt_at": series.bankrupt_at,
    });
    write_json(&files[1], &summary)?;
    Ok(files.to_vec())
}

fn learn(a: &LearnArgs) -> Result<Vec<PathBuf>> {
    let defaults = LearnSettings::default();
    let settings = LearnSettings {
        likelihood: Likelihood {
            mean: a.lik_mean,
            std: a.lik_std,
        },
        mh: ChainSettings {
            iterations: a.iterations.unwrap_or(defaults.mh.iterations),
            burn_in: a.burn_in.unwrap_or(defaults.mh.burn_in),
            ..defaults.mh
        },
        gp: GpSettings {
            iterations: a.iterations.unwrap_or(defaults.gp.iterations),
            burn_in: a.burn_in.unwrap_or(defaults.gp.burn_in),
            ..defaults.gp
        },
        ..defaults
    };
    settings.likelihood.gamma()?;
    let seed = match (a.method, a.seed) {
        (Method::DwpGrid, s) => s.unwrap_or(0),
        (_, Some(s)) => s,
        (_, None) => return Err(Error::usage("the samplers need an explicit --seed")),
    };
    let data = a.data.load()?;
    let cfg = a.data.backtest_config()?;
    let out = config::out_dir(a.out.as_deref());
    let mut files = vec![out.join("artifact.json"), out.join("summary.json")];
    let art = match a.method {
        Method::DwpGrid => experiment::learn(&Rule::DwpGrid, &data, &cfg, &settings, seed)?.1,
        Method::DwpMh => {
            let (art, chain) = experiment::learn_mh(&data, &cfg, &settings, seed)?;
            let f = out.join("chain.csv");
            io::write_chain(io::create(&f)?, &chain)?;
            files.push(f);
            Some(art)
        }
        Method::Gp => {
            let rule: Rule = format!("gp:features={}", a.features).parse()?;
            experiment::learn(&rule, &data, &cfg, &settings, seed)?.1
        }
    }
    .ok_or_else(|| Error::data("learner produced no artifact"))?;
    artifact::save(&files[0], &art)?;
    let summary = match &art {
        Artifact::DwpGrid(g) => json!({
            "method": "dwp-grid",
            "p": g.p,
            "value": g.value,
            "skipped": g.skipped.len(),
        }),
        Artifact::DwpMh(c) => json!({
            "method": "dwp-mh",
            "seed": seed,
            "p": c.posterior_mean,
            "posterior_std": c.posterior_std,
            "acceptance_rate": c.acceptance_rate,
            "initial": c.initial,
        }),
        Artifact::Map(m) => {
            let f = out.join("map.csv");
            report::write_map_csv(io::create(&f)?, m)?;
            files.push(f);
            json!({
                "method": "gp",
                "seed": seed,
                "features": m.features,
                "cells": m.mean_log_f.len(),
                "retained": m.retained,
                "hypers": m.hypers.iter().map(|h| json!({"name": h.name, "mean": h.mean, "sd": h.sd})).collect::<Vec<_>>(),
                "mean_x_evaluations": m.mean_x_evaluations,
                "mean_hyper_evaluations": m.mean_hyper_evaluations,
            })
        }
    };
    write_json(&files[1], &summary)?;
    Ok(files)
}

fn verify_master(a: &VerifyArgs) -> Result<Vec<PathBuf>> {
    positive(a.years, "--years")?;
    positive(a.dt, "--dt")?;
    if a.p == 0.0 {
        return Err(Error::usage("--p must be non-zero"));
    }
    if a.factors.is_empty() || a.factors.contains(&0) {
        return Err(Error::usage("--factors must be positive integers"));
    }
    let params = MarketParams::diagonal(a.n, a.drift, a.vol, vec![1.0; a.n])?;
    let levels = refinement_study(&DiversityG { p: a.p }, &params, a.years, a.dt, &a.factors, a.seed)?;
    let f = config::out_dir(a.out.as_deref()).join("decomposition.csv");
    io::write_decomposition(io::create(&f)?, &levels)?;
    Ok(vec![f])
}

fn run_experiment(a: &ExperimentArgs) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let ing = cfg.data.load(base)?;
    for w in &ing.warnings {
        eprintln!("warning: {w}");
    }
    let out = config::out_dir(a.out.as_deref());
    let rep = experiment::run_experiment(&cfg, &ing.data, Some(&out), |m| eprintln!("{m}"))?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    Ok(vec![out.join("experiment.json")])
}

fn run_report(a: &ReportArgs) -> Result<Vec<PathBuf>> {
    let path = if a.experiment.is_dir() {
        a.experiment.join("experiment.json")
    } else {
        a.experiment.clone()
    };
    let rep = experiment::load_report(&path)?;
    report::write_report(&rep, a.fold, &config::out_dir(a.out.as_deref()))
}

/// Run a parsed command; returns the files written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Backtest(a) => backtest(a),
        Command::Learn(a) => learn(a),
        Command::VerifyMaster(a) => verify_master(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Report(a) => run_report(a),
    }
}

/// Parse `args` (program name first), run, and map the outcome to an exit
/// code. Messages go to stdout on success and stderr on failure.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
