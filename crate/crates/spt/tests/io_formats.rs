use std::fs;
use std::path::Path;

use proptest::prelude::*;
use spt::error::Error;
use spt::io::{self, ingest_panel, IngestOptions};
use spt_core::backtest::{CharPanel, Dataset, ReturnsPanel};
use spt_core::linalg::Mat;
use spt_core::market::{simulate_market, MarketParams};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn ingest(r: &Path, c: Option<&Path>) -> spt::Result<Dataset> {
    ingest_panel(r, c, None, IngestOptions::default()).map(|i| i.data)
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn panel() -> impl Strategy<Value = Dataset> {
    (1usize..12, 1usize..5, 0usize..3).prop_flat_map(|(days, n, k)| {
        (
            prop::collection::vec(-0.99f64..5.0, days * n),
            prop::collection::vec(any::<bool>(), days * n),
            prop::collection::vec(prop_oneof![3 => -1e6f64..1e6, 1 => Just(1.25)], days * n * k),
        )
            .prop_map(move |(r, m, c)| {
                let dates = (0..days).map(|d| format!("2001-{:02}-{:02}", 1 + d / 28, 1 + d % 28)).collect();
                let ids = (0..n).map(|i| format!("id{i}")).collect();
                let panel = ReturnsPanel::new(dates, ids, Mat::from_row_major(days, n, r).unwrap(), m).unwrap();
                let names = (0..k).map(|j| format!("c{j}")).collect();
                Dataset::new(panel, CharPanel::new(names, days, n, c).unwrap()).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trip_is_bit_exact(data in panel()) {
        let dir = tempfile::tempdir().unwrap();
        let (r, c) = (dir.path().join("r.csv"), dir.path().join("c.csv"));
        io::write_dataset(&r, &c, &data).unwrap();
        let back = ingest(&r, Some(&c)).unwrap();
        prop_assert_eq!(&back.panel.dates, &data.panel.dates);
        prop_assert_eq!(&back.panel.asset_ids, &data.panel.asset_ids);
        prop_assert_eq!(&back.panel.membership, &data.panel.membership);
        for t in 0..data.days() {
            for i in 0..data.n() {
                prop_assert!(same_bits(back.panel.returns[(t, i)], data.panel.returns[(t, i)]));
            }
        }
        let k = data.chars.k();
        if k > 0 {
            prop_assert_eq!(&back.chars.names, &data.chars.names);
            for t in 0..data.days() {
                for i in 0..data.n() {
                    for j in 0..k {
                        prop_assert!(same_bits(back.chars.value(t, i, j), data.chars.value(t, i, j)));
                    }
                }
            }
        }
    }

    #[test]
    fn market_path_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..5) {
        let params = MarketParams::diagonal(n, 0.05, 0.2, vec![1.0; n]).unwrap();
        let path = simulate_market(&params, 0.1, 1.0 / 252.0, seed).unwrap();
        let mut buf = Vec::new();
        io::write_market_path(&mut buf, &path).unwrap();
        let back = io::read_market_path(buf.as_slice(), "m.csv").unwrap();
        prop_assert_eq!(back.times.len(), path.times.len());
        for (a, b) in back.times.iter().zip(&path.times) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for k in 0..path.times.len() {
            for i in 0..n {
                prop_assert_eq!(back.caps[(k, i)].to_bits(), path.caps[(k, i)].to_bits());
            }
        }
    }
}

#[test]
fn parse_errors_carry_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.csv", "date,asset_id,return,member\nd1,a,0.01,1\nd1,b,abc,1\n");
    match ingest(&r, None).unwrap_err() {
        Error::Parse { file, line, msg } => {
            assert!(file.ends_with("r.csv"));
            assert_eq!(line, 3);
            assert!(msg.contains("abc"), "{msg}");
        }
        e => panic!("{e}"),
    }
    let r = write(dir.path(), "h.csv", "day,asset,ret\nd1,a,0.01\n");
    assert!(matches!(ingest(&r, None), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn member_flag_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(
        dir.path(),
        "r.csv",
        "date,asset_id,return,member\nd1,a,0.01,\nd1,b,,0\nd2,a,0.02,true\nd2,b,-0.01,1\n",
    );
    let d = ingest(&r, None).unwrap();
    assert_eq!(d.panel.membership, vec![true, false, true, true]);
    // no member column at all
    let r = write(dir.path(), "r2.csv", "date,asset_id,return\nd1,a,0.01\nd1,b,0.02\n");
    assert_eq!(ingest(&r, None).unwrap().panel.membership, vec![true, true]);
}

#[test]
fn missing_rows_are_non_members() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.csv", "date,asset_id,return\nd1,a,0.01\nd1,b,0.02\nd2,b,0.03\n");
    let d = ingest(&r, None).unwrap();
    assert_eq!(d.panel.membership, vec![true, true, false, true]);
    assert_eq!(d.panel.returns[(1, 0)], 0.0);
}

#[test]
fn structural_errors() {
    let dir = tempfile::tempdir().unwrap();
    let dup = write(dir.path(), "d.csv", "date,asset_id,return\nd1,a,0.01\nd1,a,0.02\n");
    assert!(matches!(ingest(&dup, None), Err(Error::Parse { line: 3, .. })));
    let order = write(dir.path(), "o.csv", "date,asset_id,return\nd2,a,0.01\nd1,a,0.02\n");
    assert!(matches!(ingest(&order, None), Err(Error::Parse { line: 3, .. })));
    let below = write(dir.path(), "b.csv", "date,asset_id,return\nd1,a,-1.5\n");
    assert!(matches!(ingest(&below, None), Err(Error::Core(_))));
}

#[test]
fn membership_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.csv", "date,asset_id,return\nd1,a,0.01\nd1,b,0.02\nd2,a,0.0\nd2,b,0.0\n");
    let m = write(dir.path(), "m.csv", "date,asset_id,member\nd2,b,0\n");
    let d = ingest_panel(&r, None, Some(&m), IngestOptions::default()).unwrap().data;
    assert_eq!(d.panel.membership, vec![true, true, true, false]);
    let bad = write(dir.path(), "x.csv", "date,asset_id,member\nd9,b,0\n");
    assert!(matches!(
        ingest_panel(&r, None, Some(&bad), IngestOptions::default()),
        Err(Error::Parse { line: 2, .. })
    ));
}

fn four_days(dir: &Path) -> std::path::PathBuf {
    let mut text = String::from("date,asset_id,return\n");
    for d in ["2001-01-02", "2001-01-03", "2001-01-04", "2001-01-05"] {
        text.push_str(&format!("{d},a,0.01\n"));
    }
    write(dir, "r.csv", &text)
}

#[test]
fn characteristics_forward_fill_from_the_day_after_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = four_days(dir.path());
    let c = write(
        dir.path(),
        "c.csv",
        "date,asset_id,characteristic,value\n2001-01-02,a,roa,0.5\n2001-01-04,a,roa,0.7\n",
    );
    let d = ingest(&r, Some(&c)).unwrap();
    let v: Vec<f64> = (0..4).map(|t| d.chars.value(t, 0, 0)).collect();
    assert!(v[0].is_nan());
    assert_eq!(&v[1..], &[0.5, 0.5, 0.7]);

    // an extra day of lag shifts every change by one day
    let d = ingest_panel(&r, Some(&c), None, IngestOptions { lag_days: 2 }).unwrap().data;
    let v: Vec<f64> = (0..4).map(|t| d.chars.value(t, 0, 0)).collect();
    assert!(v[0].is_nan() && v[1].is_nan());
    assert_eq!(&v[2..], &[0.5, 0.5]);

    // undated rows are known before the sample
    let c = write(dir.path(), "c0.csv", "date,asset_id,characteristic,value\n,a,roa,0.1\n2001-01-03,a,roa,0.2\n");
    let d = ingest(&r, Some(&c)).unwrap();
    let v: Vec<f64> = (0..4).map(|t| d.chars.value(t, 0, 0)).collect();
    assert_eq!(v, vec![0.1, 0.1, 0.2, 0.2]);
}

#[test]
fn zero_lag_is_rejected_as_look_ahead() {
    let dir = tempfile::tempdir().unwrap();
    let r = four_days(dir.path());
    let e = ingest_panel(&r, None, None, IngestOptions { lag_days: 0 }).unwrap_err();
    assert!(matches!(e, Error::LookAhead(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn calendar_gaps_are_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.csv", "date,asset_id,return\n2001-01-02,a,0\n2001-01-05,a,0\n2001-01-15,a,0\n");
    let ing = ingest_panel(&r, None, None, IngestOptions::default()).unwrap();
    assert_eq!(ing.warnings.len(), 1);
    assert!(ing.warnings[0].contains("2001-01-15"));
}

#[test]
fn chain_dump_reads_back_retained_samples() {
    use spt_core::inference::{mh_sample, ChainConfig};
    let cfg = ChainConfig {
        iterations: 200,
        burn_in: 50,
        ..ChainConfig::default()
    };
    let chain = mh_sample(&cfg, 3, |p| Ok(-0.5 * p * p)).unwrap();
    let mut buf = Vec::new();
    io::write_chain(&mut buf, &chain).unwrap();
    let s = io::read_chain_samples(buf.as_slice(), "chain.csv", 50).unwrap();
    assert_eq!(s, chain.retained());
}
