//! CSV formats for market paths, panels, wealth series, decompositions and
//! chain dumps. Floats are written with Rust's shortest round-trip
//! formatting, so a write/read cycle is bit-exact.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use spt_core::backtest::{CharPanel, Dataset, ReturnsPanel, WealthSeries};
use spt_core::inference::ExponentChain;
use spt_core::linalg::Mat;
use spt_core::market::MarketPath;
use spt_core::master::RefinementLevel;

use crate::error::{Error, Result};

/// Calendar gaps longer than this many days are reported as warnings.
pub const MAX_GAP_DAYS: i64 = 4;

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(file, line, e.to_string())
}

fn write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io {
            file: String::from("<output>"),
            source: e,
        },
        other => Error::data(format!("{other:?}")),
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn header<R: Read>(rdr: &mut csv::Reader<R>, file: &str) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| csv_error(file, e))?
        .iter()
        .map(String::from)
        .collect())
}

fn expect_header(found: &[String], want: &[&str], file: &str) -> Result<()> {
    if found.len() < want.len() || found.iter().zip(want).any(|(a, b)| a != b) {
        return Err(Error::parse(
            file,
            1,
            format!("expected header `{}`, found `{}`", want.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn float(file: &str, line: u64, what: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(file, line, format!("cannot parse {what} `{s}` as a number")))
}

fn flag(file: &str, line: u64, s: &str) -> Result<Option<bool>> {
    match s {
        "" => Ok(None),
        "1" | "true" | "TRUE" | "True" => Ok(Some(true)),
        "0" | "false" | "FALSE" | "False" => Ok(Some(false)),
        _ => Err(Error::parse(file, line, format!("member flag `{s}` is not 0/1/true/false"))),
    }
}

/// `t,asset_1..asset_n` with capitalisations only.
pub fn write_market_path<W: Write>(w: W, path: &MarketPath) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut head = vec![String::from("t")];
    head.extend((1..=path.n()).map(|i| format!("asset_{i}")));
    wtr.write_record(&head).map_err(write_error)?;
    for (k, t) in path.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(path.caps.row(k).iter().map(f64::to_string));
        wtr.write_record(&row).map_err(write_error)?;
    }
    wtr.flush().map_err(|e| Error::Io {
        file: String::from("<output>"),
        source: e,
    })
}

/// Weights are recomputed from the capitalisations.
pub fn read_market_path<R: Read>(r: R, file: &str) -> Result<MarketPath> {
    let mut rdr = reader(r);
    let head = header(&mut rdr, file)?;
    if head.first().map(String::as_str) != Some("t") || head.len() < 2 {
        return Err(Error::parse(file, 1, "expected header `t,asset_1..asset_n`"));
    }
    let n = head.len() - 1;
    let mut times = Vec::new();
    let mut caps = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = line_of(&rec);
        if rec.len() != n + 1 {
            return Err(Error::parse(file, line, format!("expected {} fields, found {}", n + 1, rec.len())));
        }
        times.push(float(file, line, "time", &rec[0])?);
        for i in 1..=n {
            caps.push(float(file, line, "capitalisation", &rec[i])?);
        }
    }
    let steps = times.len();
    Ok(MarketPath::from_caps(times, Mat::from_row_major(steps, n, caps)?)?)
}

/// `date,asset_id,return,member` in long format, one row per day and asset.
pub fn write_returns<W: Write>(w: W, panel: &ReturnsPanel) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "asset_id", "return", "member"]).map_err(write_error)?;
    for (t, date) in panel.dates.iter().enumerate() {
        let members = panel.members(t);
        for (i, id) in panel.asset_ids.iter().enumerate() {
            let ret = panel.returns[(t, i)].to_string();
            let m = if members[i] { "1" } else { "0" };
            wtr.write_record([date.as_str(), id.as_str(), ret.as_str(), m]).map_err(write_error)?;
        }
    }
    wtr.flush().map_err(|e| Error::io(Path::new("<output>"), e))
}

/// `date,asset_id,characteristic,value`: each value is dated by the close
/// at which it became known. Only changes are written; an empty date marks
/// a value known before the first panel day.
pub fn write_characteristics<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "asset_id", "characteristic", "value"]).map_err(write_error)?;
    let chars = &data.chars;
    for t in 0..data.days() {
        let date = if t == 0 { "" } else { data.panel.dates[t - 1].as_str() };
        for (i, id) in data.panel.asset_ids.iter().enumerate() {
            for (c, name) in chars.names.iter().enumerate() {
                let v = chars.value(t, i, c);
                if t > 0 && chars.value(t - 1, i, c).to_bits() == v.to_bits() {
                    continue;
                }
                wtr.write_record([date, id.as_str(), name.as_str(), v.to_string().as_str()])
                    .map_err(write_error)?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io(Path::new("<output>"), e))
}

pub fn write_dataset(returns: &Path, characteristics: &Path, data: &Dataset) -> Result<()> {
    write_returns(create(returns)?, &data.panel)?;
    write_characteristics(create(characteristics)?, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// Panel days between a report and its first use. Zero would let a
    /// strategy trade on the close it is deciding at.
    pub lag_days: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { lag_days: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: Dataset,
    pub warnings: Vec<String>,
}

struct RawPanel {
    dates: Vec<String>,
    ids: Vec<String>,
    cells: HashMap<(usize, usize), (f64, Option<bool>)>,
}

fn read_raw_returns<R: Read>(r: R, file: &str) -> Result<RawPanel> {
    let mut rdr = reader(r);
    let head = header(&mut rdr, file)?;
    expect_header(&head, &["date", "asset_id", "return"], file)?;
    let has_member = head.get(3).map(String::as_str) == Some("member");
    let mut raw = RawPanel {
        dates: Vec::new(),
        ids: Vec::new(),
        cells: HashMap::new(),
    };
    let mut id_index: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = line_of(&rec);
        if rec.len() < 3 {
            return Err(Error::parse(file, line, "expected date,asset_id,return[,member]"));
        }
        let date = &rec[0];
        if date.is_empty() {
            return Err(Error::parse(file, line, "empty date"));
        }
        if raw.dates.last().map(String::as_str) != Some(date) {
            if let Some(prev) = raw.dates.last() {
                if date <= prev.as_str() {
                    return Err(Error::parse(
                        file,
                        line,
                        format!("date `{date}` out of order after `{prev}`; rows must be grouped by ascending date"),
                    ));
                }
            }
            raw.dates.push(date.to_string());
        }
        let t = raw.dates.len() - 1;
        let next = id_index.len();
        let i = *id_index.entry(rec[1].to_string()).or_insert(next);
        if i == raw.ids.len() {
            raw.ids.push(rec[1].to_string());
        }
        let member = if has_member { flag(file, line, rec.get(3).unwrap_or(""))? } else { None };
        let ret = match (&rec[2], member) {
            ("", Some(false)) => 0.0,
            (s, _) => float(file, line, "return", s)?,
        };
        if raw.cells.insert((t, i), (ret, member)).is_some() {
            return Err(Error::parse(file, line, format!("duplicate row for `{}` on `{date}`", &rec[1])));
        }
    }
    if raw.dates.is_empty() {
        return Err(Error::parse(file, 1, "no data rows"));
    }
    Ok(raw)
}

fn apply_membership<R: Read>(r: R, file: &str, raw: &RawPanel, members: &mut [bool]) -> Result<()> {
    let mut rdr = reader(r);
    let head = header(&mut rdr, file)?;
    expect_header(&head, &["date", "asset_id", "member"], file)?;
    let dates: HashMap<&str, usize> = raw.dates.iter().enumerate().map(|(t, d)| (d.as_str(), t)).collect();
    let ids: HashMap<&str, usize> = raw.ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let n = raw.ids.len();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = line_of(&rec);
        let t = *dates
            .get(&rec[0])
            .ok_or_else(|| Error::parse(file, line, format!("date `{}` not in the returns panel", &rec[0])))?;
        let i = *ids
            .get(&rec[1])
            .ok_or_else(|| Error::parse(file, line, format!("asset `{}` not in the returns panel", &rec[1])))?;
        if let Some(m) = flag(file, line, rec.get(2).unwrap_or(""))? {
            members[t * n + i] = m;
        }
    }
    Ok(())
}

fn read_characteristics<R: Read>(
    r: R,
    file: &str,
    dates: &[String],
    ids: &[String],
    lag: usize,
) -> Result<CharPanel> {
    let mut rdr = reader(r);
    let head = header(&mut rdr, file)?;
    expect_header(&head, &["date", "asset_id", "characteristic", "value"], file)?;
    let id_index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let mut names: Vec<String> = Vec::new();
    // (asset, characteristic) -> [(first usable day, value, line)]
    let mut reports: HashMap<(usize, usize), Vec<(usize, f64, u64)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        let line = line_of(&rec);
        if rec.len() != 4 {
            return Err(Error::parse(file, line, "expected date,asset_id,characteristic,value"));
        }
        let i = *id_index
            .get(&rec[1])
            .ok_or_else(|| Error::parse(file, line, format!("asset `{}` not in the returns panel", &rec[1])))?;
        let c = match names.iter().position(|n| n == &rec[2]) {
            Some(c) => c,
            None => {
                names.push(rec[2].to_string());
                names.len() - 1
            }
        };
        let v = float(file, line, "value", &rec[3])?;
        // strictly after the report's own close, plus any extra lag
        let known_after = if rec[0].is_empty() { 0 } else { dates.partition_point(|d| d.as_str() <= &rec[0]) };
        let first = known_after + lag - 1;
        let list = reports.entry((i, c)).or_default();
        if let Some(&(prev, _, _)) = list.last() {
            if first < prev {
                return Err(Error::parse(file, line, "reports for an asset must be in date order"));
            }
        }
        list.push((first, v, line));
    }
    let (days, n, k) = (dates.len(), ids.len(), names.len());
    let mut data = vec![f64::NAN; days * n * k];
    for ((i, c), list) in reports {
        for (j, &(first, v, _)) in list.iter().enumerate() {
            let end = list.get(j + 1).map_or(days, |x| x.0).min(days);
            for t in first.min(days)..end {
                data[(t * n + i) * k + c] = v;
            }
        }
    }
    Ok(CharPanel::new(names, days, n, data)?)
}

fn gap_warnings(dates: &[String]) -> Vec<String> {
    let parsed: Vec<Option<NaiveDate>> = dates
        .iter()
        .map(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
        .collect();
    parsed
        .windows(2)
        .zip(dates.windows(2))
        .filter_map(|(p, d)| match (p[0], p[1]) {
            (Some(a), Some(b)) if (b - a).num_days() > MAX_GAP_DAYS => Some(format!(
                "gap of {} calendar days between {} and {}",
                (b - a).num_days(),
                d[0],
                d[1]
            )),
            _ => None,
        })
        .collect()
}

/// Build a dataset from a returns file and optional characteristics and
/// membership files. Missing (date, asset) rows are non-members.
pub fn ingest_panel(
    returns: &Path,
    characteristics: Option<&Path>,
    membership: Option<&Path>,
    options: IngestOptions,
) -> Result<Ingested> {
    if options.lag_days == 0 {
        return Err(Error::LookAhead(String::from(
            "characteristics must be lagged by at least one day",
        )));
    }
    let rname = returns.display().to_string();
    let raw = read_raw_returns(open(returns)?, &rname)?;
    let (days, n) = (raw.dates.len(), raw.ids.len());
    let mut rets = Mat::zeros(days, n);
    let mut members = vec![false; days * n];
    for (&(t, i), &(r, m)) in &raw.cells {
        rets[(t, i)] = r;
        members[t * n + i] = m.unwrap_or(true);
    }
    if let Some(p) = membership {
        apply_membership(open(p)?, &p.display().to_string(), &raw, &mut members)?;
    }
    let chars = match characteristics {
        Some(p) => read_characteristics(open(p)?, &p.display().to_string(), &raw.dates, &raw.ids, options.lag_days)?,
        None => CharPanel::empty(days, n),
    };
    let warnings = gap_warnings(&raw.dates);
    let panel = ReturnsPanel::new(raw.dates, raw.ids, rets, members)?;
    Ok(Ingested {
        data: Dataset::new(panel, chars)?,
        warnings,
    })
}

/// `date,wealth,return,turnover,cost`; `wealth` is the value after the
/// day's return and the rebalancing cost.
pub fn write_wealth<W: Write>(w: W, dates: &[String], s: &WealthSeries) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "wealth", "return", "turnover", "cost"]).map_err(write_error)?;
    for t in 0..s.returns.len() {
        wtr.write_record([
            dates[t].clone(),
            s.wealth[t + 1].to_string(),
            s.returns[t].to_string(),
            s.turnover[t].to_string(),
            s.costs[t].to_string(),
        ])
        .map_err(write_error)?;
    }
    wtr.flush().map_err(|e| Error::io(Path::new("<output>"), e))
}

/// `dt,lhs,g_term,drift_integral,covariate_integral,residual`.
pub fn write_decomposition<W: Write>(w: W, levels: &[RefinementLevel]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["dt", "lhs", "g_term", "drift_integral", "covariate_integral", "residual"])
        .map_err(write_error)?;
    for l in levels {
        let d = &l.decomposition;
        wtr.write_record(
            [l.dt, d.lhs, d.g_term, d.drift_integral, d.covariate_integral, d.residual].map(|x| x.to_string()),
        )
        .map_err(write_error)?;
    }
    wtr.flush().map_err(|e| Error::io(Path::new("<output>"), e))
}

/// `iter,p,log_lik,accepted` for every iteration, burn-in included.
pub fn write_chain<W: Write>(w: W, chain: &ExponentChain) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["iter", "p", "log_lik", "accepted"]).map_err(write_error)?;
    for (k, ((p, ll), acc)) in chain.samples.iter().zip(&chain.log_liks).zip(&chain.accepted).enumerate() {
        wtr.write_record([k.to_string(), p.to_string(), ll.to_string(), u8::from(*acc).to_string()])
            .map_err(write_error)?;
    }
    wtr.flush().map_err(|e| Error::io(Path::new("<output>"), e))
}

/// Retained `p` samples of a chain dump, skipping the first `burn_in` rows.
pub fn read_chain_samples<R: Read>(r: R, file: &str, burn_in: usize) -> Result<Vec<f64>> {
    let mut rdr = reader(r);
    let head = header(&mut rdr, file)?;
    expect_header(&head, &["iter", "p", "log_lik", "accepted"], file)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(file, e))?;
        if k >= burn_in {
            out.push(float(file, line_of(&rec), "p", &rec[1])?);
        }
    }
    Ok(out)
}
