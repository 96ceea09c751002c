//! Results tables and plot data from a stored experiment.
//!
//! * `table1.csv`: mean across folds of in-sample and out-of-sample annual
//!   returns (%) and out-of-sample Sharpe ratio; `table1_err.csv` holds the
//!   matching two-standard-error half-widths.
//! * `table2.csv`: the same columns for a single fold.
//! * `figure1.csv`: histogram of the retained MH samples of `p`.
//! * `figure2.csv`: out-of-sample wealth paths.
//! * `figure3.csv`: learned log maps with `±2 sd` bands.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::artifact::{Artifact, MapArtifact};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentReport, FoldReport, MeanErr};
use crate::io;

pub const TABLE_HEADER: [&str; 4] = ["portfolio", "is_ret", "oos_ret", "oos_sr"];

/// Histogram range and resolution for the exponent posterior.
pub const HIST_LO: f64 = -8.0;
pub const HIST_HI: f64 = 8.0;
pub const HIST_BINS: usize = 64;

fn flush<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush().map_err(|e| Error::io(Path::new("<output>"), e))
}

fn rec<W: Write, I, T>(wtr: &mut csv::Writer<W>, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    wtr.write_record(row).map_err(|e| Error::data(e.to_string()))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// Grid coordinates, then `log_f,sd,lower,upper`, one row per cell.
pub fn write_map_csv<W: Write>(w: W, m: &MapArtifact) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut head = m.features.clone();
    head.extend(["log_f", "sd", "lower", "upper"].map(String::from));
    rec(&mut wtr, &head)?;
    for (c, x) in m.cell_coords()?.iter().enumerate() {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.extend([m.mean_log_f[c], m.sd_log_f[c], m.lower[c], m.upper[c]].map(|v| v.to_string()));
        rec(&mut wtr, &row)?;
    }
    flush(wtr)
}

fn write_table1<W: Write>(w: W, r: &ExperimentReport, pick: fn(&MeanErr) -> Option<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    rec(&mut wtr, TABLE_HEADER)?;
    for a in &r.aggregates {
        let f = |m: &Option<MeanErr>| opt(m.as_ref().and_then(pick));
        rec(&mut wtr, [a.name.clone(), f(&a.is_ret), f(&a.oos_ret), f(&a.oos_sr)])?;
    }
    flush(wtr)
}

fn write_table2<W: Write>(w: W, fold: &FoldReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    rec(&mut wtr, TABLE_HEADER)?;
    for s in &fold.results {
        rec(&mut wtr, [s.name.clone(), s.is_ret.to_string(), s.oos_ret.to_string(), opt(s.oos_sr)])?;
    }
    flush(wtr)
}

/// Counts over `[lo, hi]` in equal bins; the top edge belongs to the last
/// bin.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in samples {
        if x < lo || x > hi || x.is_nan() {
            continue;
        }
        let b = (((x - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

fn write_figure1<W: Write>(w: W, fold: &FoldReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    rec(&mut wtr, ["portfolio", "bin_lo", "bin_hi", "count", "density"])?;
    let width = (HIST_HI - HIST_LO) / HIST_BINS as f64;
    for s in &fold.results {
        let Some(Artifact::DwpMh(c)) = &s.artifact else { continue };
        let counts = histogram(&c.samples, HIST_LO, HIST_HI, HIST_BINS);
        let total = c.samples.len().max(1) as f64;
        for (b, &k) in counts.iter().enumerate() {
            let lo = HIST_LO + b as f64 * width;
            rec(
                &mut wtr,
                [
                    s.name.clone(),
                    lo.to_string(),
                    (lo + width).to_string(),
                    k.to_string(),
                    (k as f64 / total / width).to_string(),
                ],
            )?;
        }
    }
    flush(wtr)
}

fn write_figure2<W: Write>(w: W, fold: &FoldReport, dates: &[String]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    rec(&mut wtr, ["portfolio", "date", "wealth"])?;
    let test = &dates[fold.fold.test.clone()];
    for s in &fold.results {
        for (t, v) in s.oos_wealth.wealth.iter().skip(1).enumerate() {
            rec(&mut wtr, [s.name.as_str(), test[t].as_str(), v.to_string().as_str()])?;
        }
    }
    flush(wtr)
}

fn write_figure3<W: Write>(w: W, fold: &FoldReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    rec(&mut wtr, ["portfolio", "cell", "x1", "x2", "log_f", "lower", "upper"])?;
    for s in &fold.results {
        let Some(Artifact::Map(m)) = &s.artifact else { continue };
        for (c, x) in m.cell_coords()?.iter().enumerate() {
            let x2 = x.get(1).map_or_else(String::new, |v| v.to_string());
            rec(
                &mut wtr,
                [
                    s.name.clone(),
                    c.to_string(),
                    x[0].to_string(),
                    x2,
                    m.mean_log_f[c].to_string(),
                    m.lower[c].to_string(),
                    m.upper[c].to_string(),
                ],
            )?;
        }
    }
    flush(wtr)
}

/// Write every table and figure file into `out`; single-fold outputs use
/// `fold` (the last fold by default). Returns the files written.
pub fn write_report(r: &ExperimentReport, fold: Option<usize>, out: &Path) -> Result<Vec<PathBuf>> {
    let k = fold.unwrap_or(r.folds.len().saturating_sub(1));
    let f = r
        .folds
        .get(k)
        .ok_or_else(|| Error::usage(format!("fold {k} not in the experiment ({} folds)", r.folds.len())))?;
    let files: Vec<PathBuf> = ["table1.csv", "table1_err.csv", "table2.csv", "figure1.csv", "figure2.csv", "figure3.csv"]
        .iter()
        .map(|n| out.join(n))
        .collect();
    write_table1(io::create(&files[0])?, r, |m| Some(m.mean))?;
    write_table1(io::create(&files[1])?, r, |m| m.two_se)?;
    write_table2(io::create(&files[2])?, f)?;
    write_figure1(io::create(&files[3])?, f)?;
    write_figure2(io::create(&files[4])?, f, &r.dates)?;
    write_figure3(io::create(&files[5])?, f)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges() {
        let c = histogram(&[-8.0, -7.9, 0.0, 8.0, 9.0, f64::NAN], -8.0, 8.0, 4);
        assert_eq!(c, vec![2, 0, 1, 1]);
    }
}
