//! Price and fundamentals loading, alignment and the inclusion rules.
//!
//! Prices are weekly closes (`date,price`), one file per ticker plus one
//! shared market-index file. Fundamentals are quarterly rows keyed by
//! `ticker,quarter_end` followed by the raw feature columns; an empty field
//! or the literal `NaN` marks a missing value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Nine years of quarterly reports.
pub const DEFAULT_MIN_QUARTERS: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeriesKind {
    Stock,
    Market,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub ticker: String,
    pub kind: SeriesKind,
    pub points: Vec<PricePoint>,
}

impl PriceSeries {
    /// Builds a series, sorting by date and enforcing the invariants:
    /// positive finite prices, no duplicate dates, at least two points.
    pub fn new(ticker: impl Into<String>, kind: SeriesKind, mut points: Vec<PricePoint>) -> Result<Self> {
        let ticker = ticker.into();
        if let Some(p) = points.iter().find(|p| !(p.price.is_finite() && p.price > 0.0)) {
            return Err(Error::Validation(format!(
                "{ticker}: non-positive price {} on {}",
                p.price, p.date
            )));
        }
        points.sort_by_key(|p| p.date);
        if let Some(w) = points.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(Error::Validation(format!("{ticker}: duplicate date {}", w[0].date)));
        }
        if points.len() < 2 {
            return Err(Error::Validation(format!(
                "{ticker}: series needs at least 2 points, got {}",
                points.len()
            )));
        }
        Ok(PriceSeries { ticker, kind, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.points[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.points[self.points.len() - 1].date
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.points.iter().map(|p| p.date)
    }

    /// Keeps the last observation of every ISO week. Weekly input passes
    /// through unchanged.
    pub fn weekly(&self) -> PriceSeries {
        let mut out: Vec<PricePoint> = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let week = p.date.iso_week();
            match out.last_mut() {
                Some(last) if last.date.iso_week() == week => *last = *p,
                _ => out.push(*p),
            }
        }
        PriceSeries {
            ticker: self.ticker.clone(),
            kind: self.kind,
            points: out,
        }
    }
}

/// One quarterly row of raw fundamentals. `None` is the missing sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub ticker: String,
    pub quarter_end: NaiveDate,
    pub values: Vec<Option<f64>>,
}

impl FeatureRecord {
    fn has_value(&self, idx: usize) -> bool {
        matches!(self.values.get(idx), Some(Some(v)) if v.is_finite())
    }

    /// Values with the missing sentinel mapped to `NaN`.
    pub fn values_or_nan(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompanyDataset {
    pub ticker: String,
    pub stock: PriceSeries,
    pub market: PriceSeries,
    /// Sorted by `quarter_end`.
    pub records: Vec<FeatureRecord>,
    pub log_stock: Vec<f64>,
    pub log_market: Vec<f64>,
}

impl CompanyDataset {
    /// Assembles a dataset without aligning; log series stay empty until
    /// [`align_and_log`] runs.
    pub fn new(stock: PriceSeries, market: PriceSeries, mut records: Vec<FeatureRecord>) -> Self {
        records.sort_by_key(|r| r.quarter_end);
        CompanyDataset {
            ticker: stock.ticker.clone(),
            stock,
            market,
            records,
            log_stock: Vec::new(),
            log_market: Vec::new(),
        }
    }

    pub fn date_at(&self, idx: usize) -> NaiveDate {
        self.stock.points[idx].date
    }

    /// The most recent record with `quarter_end <= date`.
    pub fn vector_at(&self, date: NaiveDate) -> Option<&FeatureRecord> {
        let pos = self.records.partition_point(|r| r.quarter_end <= date);
        pos.checked_sub(1).map(|i| &self.records[i])
    }

    pub fn is_aligned(&self) -> bool {
        self.log_stock.len() == self.stock.len()
            && self.log_market.len() == self.market.len()
            && self.stock.dates().eq(self.market.dates())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    TooShort,
    MissingPrices,
    MissingKeyRatios,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::TooShort => "too_short",
            DropReason::MissingPrices => "missing_prices",
            DropReason::MissingKeyRatios => "missing_key_ratios",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InclusionReport {
    pub kept: Vec<String>,
    pub dropped: Vec<(String, DropReason)>,
}

impl InclusionReport {
    pub fn drop(&mut self, ticker: impl Into<String>, reason: DropReason) {
        self.dropped.push((ticker.into(), reason));
    }

    /// Rows for the `ticker,status,reason` report, sorted by ticker.
    pub fn rows(&self) -> Vec<(String, &'static str, &'static str)> {
        let mut rows: Vec<_> = self
            .kept
            .iter()
            .map(|t| (t.clone(), "kept", ""))
            .chain(self.dropped.iter().map(|(t, r)| (t.clone(), "dropped", r.as_str())))
            .collect();
        rows.sort();
        rows
    }
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| format!("bad date {s:?}: {e}"))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Loads a `date,price` CSV. The ticker is the file stem.
pub fn load_prices(path: &Path, kind: SeriesKind) -> Result<PriceSeries> {
    let ticker = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("no ticker in file name {}", path.display())))?
        .to_string();
    let mut rdr = open_csv(path)?;
    check_header(path, rdr.headers()?, &["date", "price"])?;
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_of(&rec),
            message,
        };
        if rec.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", rec.len())));
        }
        let date = parse_date(&rec[0]).map_err(parse_err)?;
        let price: f64 = rec[1]
            .parse()
            .map_err(|e| parse_err(format!("bad price {:?}: {e}", &rec[1])))?;
        points.push(PricePoint { date, price });
    }
    PriceSeries::new(ticker, kind, points)
}

pub fn write_prices(path: &Path, series: &PriceSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", "price"])?;
    for p in &series.points {
        w.write_record([p.date.format(DATE_FORMAT).to_string(), p.price.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw fundamentals: column names plus all records, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Fundamentals {
    pub feature_names: Vec<String>,
    pub records: Vec<FeatureRecord>,
}

impl Fundamentals {
    pub fn by_ticker(&self) -> BTreeMap<String, Vec<FeatureRecord>> {
        let mut out: BTreeMap<String, Vec<FeatureRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.ticker.clone()).or_default().push(r.clone());
        }
        out
    }
}

fn parse_value(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| format!("bad value {s:?}: {e}"))
}

/// Loads `ticker,quarter_end,f000,...`.
pub fn load_fundamentals(path: &Path) -> Result<Fundamentals> {
    let mut rdr = open_csv(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "ticker" || &header[1] != "quarter_end" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected header ticker,quarter_end,<features...>".into(),
        });
    }
    let feature_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != header.len() {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let ticker = rec[0].to_string();
        let quarter_end = parse_date(&rec[1]).map_err(parse_err)?;
        if !seen.insert((ticker.clone(), quarter_end)) {
            return Err(Error::Validation(format!("{ticker}: duplicate quarter {quarter_end}")));
        }
        let values = rec
            .iter()
            .skip(2)
            .map(parse_value)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(parse_err)?;
        records.push(FeatureRecord {
            ticker,
            quarter_end,
            values,
        });
    }
    Ok(Fundamentals { feature_names, records })
}

pub fn write_fundamentals(path: &Path, f: &Fundamentals) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["ticker".to_string(), "quarter_end".to_string()];
    header.extend(f.feature_names.iter().cloned());
    w.write_record(&header)?;
    for r in &f.records {
        let mut row = vec![r.ticker.clone(), r.quarter_end.format(DATE_FORMAT).to_string()];
        row.extend(r.values.iter().map(|v| match v {
            Some(x) => x.to_string(),
            None => String::new(),
        }));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_inclusion_report(path: &Path, report: &InclusionReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ticker", "status", "reason"])?;
    for (t, status, reason) in report.rows() {
        w.write_record([t.as_str(), status, reason])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Restricts stock and market to their common dates and fills the log
/// series. Idempotent.
pub fn align_and_log(company: &CompanyDataset) -> Result<CompanyDataset> {
    let market_dates: BTreeSet<NaiveDate> = company.market.dates().collect();
    let stock_pts: Vec<PricePoint> = company
        .stock
        .points
        .iter()
        .copied()
        .filter(|p| market_dates.contains(&p.date))
        .collect();
    let stock_dates: BTreeSet<NaiveDate> = stock_pts.iter().map(|p| p.date).collect();
    let market_pts: Vec<PricePoint> = company
        .market
        .points
        .iter()
        .copied()
        .filter(|p| stock_dates.contains(&p.date))
        .collect();
    if stock_pts.len() < 2 {
        return Err(Error::Alignment(format!(
            "{}: stock ({}..{}) and market ({}..{}) share {} dates",
            company.ticker,
            company.stock.first_date(),
            company.stock.last_date(),
            company.market.first_date(),
            company.market.last_date(),
            stock_pts.len()
        )));
    }
    let log_stock = stock_pts.iter().map(|p| p.price.ln()).collect();
    let log_market = market_pts.iter().map(|p| p.price.ln()).collect();
    Ok(CompanyDataset {
        ticker: company.ticker.clone(),
        stock: PriceSeries {
            points: stock_pts,
            ..company.stock.clone()
        },
        market: PriceSeries {
            points: market_pts,
            ..company.market.clone()
        },
        records: company.records.clone(),
        log_stock,
        log_market,
    })
}

/// Prices must span the record period (one week of slack at each end)
/// without gaps longer than two weeks.
fn prices_cover(company: &CompanyDataset, records: &[FeatureRecord]) -> bool {
    if !company.is_aligned() || company.stock.len() < 2 {
        return false;
    }
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return false;
    };
    let slack = Duration::days(7);
    let lo = first.quarter_end;
    let hi = last.quarter_end;
    if company.stock.first_date() > lo + slack || company.stock.last_date() + slack < hi {
        return false;
    }
    company
        .stock
        .points
        .windows(2)
        .filter(|w| w[1].date >= lo - slack && w[0].date <= hi + slack)
        .all(|w| (w[1].date - w[0].date).num_days() <= 14)
}

/// Filters companies by history length, price coverage and key-ratio
/// completeness. Records missing any key ratio are removed from kept
/// companies. The report partitions the input tickers.
pub fn apply_inclusion_rules(
    companies: &[CompanyDataset],
    min_quarters: usize,
    key_ratio_indices: &[usize],
) -> (Vec<CompanyDataset>, InclusionReport) {
    let mut kept = Vec::new();
    let mut report = InclusionReport::default();
    for c in companies {
        if c.records.len() < min_quarters {
            report.drop(&c.ticker, DropReason::TooShort);
            continue;
        }
        let complete: Vec<FeatureRecord> = c
            .records
            .iter()
            .filter(|r| key_ratio_indices.iter().all(|&k| r.has_value(k)))
            .cloned()
            .collect();
        if !prices_cover(c, &c.records) {
            report.drop(&c.ticker, DropReason::MissingPrices);
            continue;
        }
        if complete.len() < min_quarters {
            report.drop(&c.ticker, DropReason::MissingKeyRatios);
            continue;
        }
        report.kept.push(c.ticker.clone());
        kept.push(CompanyDataset {
            records: complete,
            ..c.clone()
        });
    }
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn weekly_series(ticker: &str, kind: SeriesKind, start: &str, weeks: usize) -> PriceSeries {
        let s = d(start);
        let pts = (0..weeks)
            .map(|i| PricePoint {
                date: s + Duration::weeks(i as i64),
                price: 10.0 + i as f64 * 0.01,
            })
            .collect();
        PriceSeries::new(ticker, kind, pts).unwrap()
    }

    fn quarterly(ticker: &str, start: &str, n: usize, nf: usize) -> Vec<FeatureRecord> {
        let s = d(start);
        (0..n)
            .map(|q| FeatureRecord {
                ticker: ticker.into(),
                quarter_end: s + Duration::days(91 * q as i64),
                values: vec![Some(1.0); nf],
            })
            .collect()
    }

    #[test]
    fn load_prices_parses_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "AA.csv", "date,price\n2013-01-14,10.5\n2013-01-07,10.0\n");
        let s = load_prices(&p, SeriesKind::Stock).unwrap();
        assert_eq!(s.ticker, "AA");
        assert_eq!(s.len(), 2);
        assert_eq!(s.first_date(), d("2013-01-07"));
        assert_eq!(s.points[1].price, 10.5);
    }

    #[test]
    fn load_prices_rejects_duplicates_and_nonpositive() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write_tmp(&dir, "A.csv", "date,price\n2013-01-07,10.0\n2013-01-07,11.0\n");
        assert!(matches!(
            load_prices(&dup, SeriesKind::Stock),
            Err(Error::Validation(_))
        ));
        let zero = write_tmp(&dir, "B.csv", "date,price\n2013-01-07,0.0\n2013-01-14,1.0\n");
        assert!(matches!(
            load_prices(&zero, SeriesKind::Stock),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn load_prices_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "A.csv", "date,price\n2013-01-07,10.0\n2013-01-14,abc\n");
        match load_prices(&p, SeriesKind::Stock) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_header = write_tmp(&dir, "B.csv", "day,close\n2013-01-07,10.0\n");
        assert!(matches!(
            load_prices(&bad_header, SeriesKind::Stock),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn fundamentals_missing_sentinels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "f.csv",
            "ticker,quarter_end,f000,f001,f002\nAA,2013-03-31,1.5,,NaN\nAA,2013-06-30,2,3,4\n",
        );
        let f = load_fundamentals(&p).unwrap();
        assert_eq!(f.feature_names, ["f000", "f001", "f002"]);
        assert_eq!(f.records[0].values, vec![Some(1.5), None, None]);
        assert_eq!(f.records[1].values, vec![Some(2.0), Some(3.0), Some(4.0)]);

        let q = dir.path().join("g.csv");
        write_fundamentals(&q, &f).unwrap();
        assert_eq!(load_fundamentals(&q).unwrap(), f);
    }

    #[test]
    fn weekly_keeps_last_observation() {
        let pts = ["2013-01-07", "2013-01-08", "2013-01-11", "2013-01-14"]
            .iter()
            .enumerate()
            .map(|(i, s)| PricePoint {
                date: d(s),
                price: 1.0 + i as f64,
            })
            .collect();
        let s = PriceSeries::new("X", SeriesKind::Stock, pts).unwrap().weekly();
        assert_eq!(s.len(), 2);
        assert_eq!(s.points[0].date, d("2013-01-11"));
        assert_eq!(s.points[0].price, 3.0);
        assert_eq!(s.weekly(), s);
    }

    #[test]
    fn align_clips_to_common_range() {
        let stock = weekly_series("S", SeriesKind::Stock, "2005-01-07", 520);
        let market = weekly_series("M", SeriesKind::Market, "2004-01-09", 520);
        let c = align_and_log(&CompanyDataset::new(stock, market.clone(), vec![])).unwrap();
        assert_eq!(c.stock.first_date(), d("2005-01-07"));
        assert_eq!(c.stock.last_date(), market.last_date());
        assert!(c.stock.dates().eq(c.market.dates()));
        assert!(c.is_aligned());
        assert_eq!(align_and_log(&c).unwrap(), c);
    }

    #[test]
    fn log_of_one_is_zero() {
        let pts = vec![
            PricePoint {
                date: d("2013-01-07"),
                price: 1.0,
            },
            PricePoint {
                date: d("2013-01-14"),
                price: std::f64::consts::E,
            },
        ];
        let s = PriceSeries::new("S", SeriesKind::Stock, pts.clone()).unwrap();
        let m = PriceSeries::new("M", SeriesKind::Market, pts).unwrap();
        let c = align_and_log(&CompanyDataset::new(s, m, vec![])).unwrap();
        assert_eq!(c.log_stock[0], 0.0);
        assert!((c.log_market[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_ranges_fail_alignment() {
        let s = weekly_series("S", SeriesKind::Stock, "2005-01-07", 10);
        let m = weekly_series("M", SeriesKind::Market, "2010-01-08", 10);
        assert!(matches!(
            align_and_log(&CompanyDataset::new(s, m, vec![])),
            Err(Error::Alignment(_))
        ));
    }

    fn company(ticker: &str, n_records: usize) -> CompanyDataset {
        let s = weekly_series(ticker, SeriesKind::Stock, "2005-01-07", 520);
        let m = weekly_series("M", SeriesKind::Market, "2005-01-07", 520);
        align_and_log(&CompanyDataset::new(
            s,
            m,
            quarterly(ticker, "2005-03-31", n_records, 4),
        ))
        .unwrap()
    }

    #[test]
    fn inclusion_rules() {
        let full = company("FULL", 40);
        let short = company("SHORT", 20);
        let mut gappy = company("GAPPY", 40);
        for r in gappy.records.iter_mut().take(10) {
            r.values[0] = None;
        }
        let mut one_gap = company("ONEGAP", 40);
        one_gap.records[5].values[1] = Some(f64::NAN);
        let mut no_prices = company("NOPX", 40);
        no_prices.stock.points.truncate(100);
        no_prices.market.points.truncate(100);
        no_prices.log_stock.truncate(100);
        no_prices.log_market.truncate(100);

        let input = vec![full, short, gappy, one_gap, no_prices];
        let (kept, report) = apply_inclusion_rules(&input, 36, &[0, 1]);
        let names: Vec<&str> = kept.iter().map(|c| c.ticker.as_str()).collect();
        assert_eq!(names, ["FULL", "ONEGAP"]);
        assert_eq!(kept[1].records.len(), 39);
        assert_eq!(
            report.dropped,
            vec![
                ("SHORT".to_string(), DropReason::TooShort),
                ("GAPPY".to_string(), DropReason::MissingKeyRatios),
                ("NOPX".to_string(), DropReason::MissingPrices),
            ]
        );
        let mut all: Vec<String> = report.kept.clone();
        all.extend(report.dropped.iter().map(|(t, _)| t.clone()));
        all.sort();
        let mut expected: Vec<String> = input.iter().map(|c| c.ticker.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn vector_at_uses_latest_past_record() {
        let c = company("A", 40);
        assert!(c.vector_at(d("2005-03-30")).is_none());
        assert_eq!(c.vector_at(d("2005-03-31")).unwrap().quarter_end, d("2005-03-31"));
        assert_eq!(c.vector_at(d("2005-07-01")).unwrap().quarter_end, d("2005-06-30"));
    }
}
