//! Seeded synthetic fixtures with known ground truth.
//!
//! Stock log prices follow the shared market walk plus a piecewise-constant
//! excess drift and idiosyncratic noise. Regimes whose excess drift beats
//! the weekly equivalent of the minimum annual return are "good". One
//! fundamentals column (the planted feature) carries the sign of the regime
//! that will be in force `lead_weeks` after the record date; all other
//! columns are persistent per-company noise.

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::{
    write_fundamentals, write_prices, CompanyDataset, FeatureRecord, Fundamentals, PricePoint, PriceSeries, SeriesKind,
    DATE_FORMAT,
};
use crate::scalar::derive_seed;

const MARKET_STREAM: u64 = 1;
const FEATURE_STREAM: u64 = 2;
const COMPANY_STREAM: u64 = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub enum ChangePlan {
    /// `per_company` change points at least `min_gap` weeks apart (and from
    /// the ends); excess drift alternates between good and bad, starting
    /// with a random side.
    Random { per_company: usize, min_gap: usize },
    /// Per company: `(week index, excess drift shift)`. The first regime
    /// uses `bad_drift`.
    Explicit(Vec<Vec<(usize, f64)>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_companies: usize,
    pub weeks: usize,
    pub start: NaiveDate,
    pub changes: ChangePlan,
    /// Weekly excess log drift of good regimes.
    pub good_drift: f64,
    /// Weekly excess log drift of bad regimes.
    pub bad_drift: f64,
    /// Weekly market log drift.
    pub base_drift: f64,
    pub market_sigma: f64,
    /// Idiosyncratic weekly log-return noise.
    pub noise_sigma: f64,
    pub n_features: usize,
    pub planted_feature: usize,
    pub key_ratios: Vec<usize>,
    pub lead_weeks: usize,
    /// The last `short_history` companies start late enough to have fewer
    /// than 36 quarterly records.
    pub short_history: usize,
    /// The company before the short-history block loses a key ratio in
    /// half of its records when set.
    pub sparse_key_ratio: bool,
    /// Probability that a non-key, non-planted cell is missing.
    pub missing_rate: f64,
    /// Annual return a good regime must beat.
    pub min_annual_return: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            n_companies: 60,
            weeks: 520,
            start: NaiveDate::from_ymd_opt(2005, 1, 7).expect("valid date"),
            changes: ChangePlan::Random {
                per_company: 6,
                min_gap: 52,
            },
            good_drift: 0.015,
            bad_drift: -0.015,
            base_drift: 0.001,
            market_sigma: 0.02,
            noise_sigma: 0.02,
            n_features: 30,
            planted_feature: 7,
            key_ratios: vec![0, 1],
            lead_weeks: 13,
            short_history: 3,
            sparse_key_ratio: true,
            missing_rate: 0.02,
            min_annual_return: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.weeks < 2 {
            return bad(format!("weeks must be >= 2, got {}", self.weeks));
        }
        if !(self.noise_sigma > 0.0 && self.market_sigma >= 0.0) {
            return bad("noise_sigma must be > 0 and market_sigma >= 0".into());
        }
        if self.planted_feature >= self.n_features {
            return bad(format!(
                "planted feature {} outside {} features",
                self.planted_feature, self.n_features
            ));
        }
        if let Some(k) = self
            .key_ratios
            .iter()
            .find(|&&k| k >= self.n_features || k == self.planted_feature)
        {
            return bad(format!("key ratio index {k} invalid"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {} outside [0, 1)", self.missing_rate));
        }
        if self.short_history + usize::from(self.sparse_key_ratio) > self.n_companies {
            return bad("more special companies than companies".into());
        }
        if let ChangePlan::Explicit(plan) = &self.changes {
            if plan.len() != self.n_companies {
                return bad(format!(
                    "explicit plan for {} of {} companies",
                    plan.len(),
                    self.n_companies
                ));
            }
            for cps in plan {
                let ok =
                    cps.windows(2).all(|w| w[0].0 < w[1].0) && cps.iter().all(|&(i, _)| i > 0 && i < self.weeks - 1);
                if !ok {
                    return bad("explicit change indices must be increasing and interior".into());
                }
            }
        }
        Ok(())
    }

    /// Weekly excess drift a regime must exceed to count as good.
    pub fn good_threshold(&self) -> f64 {
        (1.0 + self.min_annual_return).ln() / 52.0
    }

    pub fn ticker(i: usize) -> String {
        format!("T{i:03}")
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.n_features)
            .map(|j| match j {
                0 => "pe_ratio".to_string(),
                1 => "ebitda".to_string(),
                _ => format!("ratio_{j:02}"),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueChange {
    pub index: usize,
    pub drift_shift: f64,
    /// A zero shift leaves no trace in the prices.
    pub recoverable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    /// Week indices of the regime's first and last price, inclusive.
    pub start: usize,
    pub end: usize,
    pub excess_drift: f64,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompanyTruth {
    pub ticker: String,
    /// Offset of the company's first week within the market calendar.
    pub first_week: usize,
    /// Indices relative to the company's own series.
    pub changes: Vec<TrueChange>,
    pub regimes: Vec<Regime>,
    /// Per record: whether the planted feature signals a good regime.
    pub record_good: Vec<(NaiveDate, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub companies: Vec<CompanyTruth>,
    pub planted_feature: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub companies: Vec<CompanyDataset>,
    pub market: PriceSeries,
    pub fundamentals: Fundamentals,
    pub truth: GroundTruth,
}

fn random_changes(rng: &mut ChaCha8Rng, weeks: usize, count: usize, min_gap: usize) -> Vec<usize> {
    if count == 0 || weeks <= 2 * min_gap {
        return Vec::new();
    }
    let (lo, hi) = (min_gap.max(1), weeks - min_gap.max(1));
    for _ in 0..10_000 {
        let mut idx: Vec<usize> = (0..count).map(|_| rng.random_range(lo..hi)).collect();
        idx.sort_unstable();
        if idx.windows(2).all(|w| w[1] - w[0] >= min_gap) {
            return idx;
        }
    }
    // Dense plans fall back to an even spread.
    let step = (hi - lo) / count.max(1);
    (0..count).map(|k| lo + k * step).collect()
}

fn quarter_ends(first: NaiveDate, last: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    for year in first.year()..=last.year() {
        for (m, d) in [(3, 31), (6, 30), (9, 30), (12, 31)] {
            let q = NaiveDate::from_ymd_opt(year, m, d).expect("valid quarter end");
            if q >= first && q <= last {
                out.push(q);
            }
        }
    }
    out
}

fn walk(rng: &mut ChaCha8Rng, start_price: f64, drifts: &[f64], sigma: f64, shocks: Option<&[f64]>) -> Vec<f64> {
    let mut log_p = start_price.ln();
    let mut out = Vec::with_capacity(drifts.len() + 1);
    out.push(log_p);
    for (i, &d) in drifts.iter().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        log_p += d + sigma * z + shocks.map_or(0.0, |s| s[i]);
        out.push(log_p);
    }
    out
}

/// Builds the fixture. Deterministic in `spec`; each company draws from
/// its own stream, so companies do not depend on each other.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let dates: Vec<NaiveDate> = (0..spec.weeks)
        .map(|w| spec.start + Duration::weeks(w as i64))
        .collect();

    let mut mrng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, MARKET_STREAM));
    let market_log = walk(
        &mut mrng,
        1000.0,
        &vec![spec.base_drift; spec.weeks - 1],
        spec.market_sigma,
        None,
    );
    let market_returns: Vec<f64> = market_log.windows(2).map(|w| w[1] - w[0]).collect();
    let to_points = |log: &[f64], offset: usize| -> Vec<PricePoint> {
        log.iter()
            .enumerate()
            .map(|(i, &l)| PricePoint {
                date: dates[offset + i],
                price: l.exp(),
            })
            .collect()
    };
    let market = PriceSeries::new("market", SeriesKind::Market, to_points(&market_log, 0))?;

    // each column keeps one offset and scale across companies
    let mut frng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, FEATURE_STREAM));
    let scales: Vec<(f64, f64)> = (0..spec.n_features)
        .map(|j| match j {
            0 => (15.0, 4.0),
            1 => (2.0e8, 5.0e7),
            _ => (frng.random_range(-5.0..5.0), 10f64.powf(frng.random_range(-1.0..2.0))),
        })
        .collect();
    let names = spec.feature_names();
    let threshold = spec.good_threshold();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let short_start = spec.n_companies - spec.short_history;
    let sparse_idx = spec.sparse_key_ratio.then(|| short_start - 1);

    let mut companies = Vec::with_capacity(spec.n_companies);
    let mut all_records = Vec::new();
    let mut truths = Vec::with_capacity(spec.n_companies);

    for c in 0..spec.n_companies {
        let ticker = SynthSpec::ticker(c);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, COMPANY_STREAM + c as u64));
        // short-history companies cover the last ~5 years only
        let first_week = if c >= short_start {
            spec.weeks.saturating_sub(260).min(spec.weeks - 2)
        } else {
            0
        };
        let n = spec.weeks - first_week;

        let (changes, first_drift): (Vec<TrueChange>, f64) = match &spec.changes {
            ChangePlan::Random { per_company, min_gap } => {
                let good_first = rng.random_bool(0.5);
                let idx = random_changes(&mut rng, n, *per_company, *min_gap);
                let first = if good_first { spec.good_drift } else { spec.bad_drift };
                let mut cur = first;
                let changes = idx
                    .into_iter()
                    .map(|index| {
                        let next = if cur == spec.good_drift {
                            spec.bad_drift
                        } else {
                            spec.good_drift
                        };
                        let shift = next - cur;
                        cur = next;
                        TrueChange {
                            index,
                            drift_shift: shift,
                            recoverable: shift != 0.0,
                        }
                    })
                    .collect();
                (changes, first)
            }
            ChangePlan::Explicit(plan) => (
                plan[c]
                    .iter()
                    .filter(|&&(i, _)| i < n - 1)
                    .map(|&(index, drift_shift)| TrueChange {
                        index,
                        drift_shift,
                        recoverable: drift_shift != 0.0,
                    })
                    .collect(),
                spec.bad_drift,
            ),
        };

        let mut regimes = Vec::with_capacity(changes.len() + 1);
        let mut start = 0;
        let mut drift = first_drift;
        for ch in &changes {
            regimes.push(Regime {
                start,
                end: ch.index,
                excess_drift: drift,
                good: drift > threshold,
            });
            start = ch.index;
            drift += ch.drift_shift;
        }
        regimes.push(Regime {
            start,
            end: n - 1,
            excess_drift: drift,
            good: drift > threshold,
        });
        // drift of the return from week i to i+1
        let step_drift: Vec<f64> = (0..n - 1)
            .map(|i| {
                regimes
                    .iter()
                    .rev()
                    .find(|r| r.start <= i)
                    .expect("first regime starts at 0")
                    .excess_drift
            })
            .collect();
        let start_price = 10.0 + 40.0 * rng.random::<f64>();
        let stock_log = walk(
            &mut rng,
            start_price,
            &step_drift,
            spec.noise_sigma,
            Some(&market_returns[first_week..]),
        );
        let stock = PriceSeries::new(ticker.clone(), SeriesKind::Stock, to_points(&stock_log, first_week))?;

        let mut state: Vec<f64> = (0..spec.n_features).map(|_| normal.sample(&mut rng)).collect();
        let mut records = Vec::new();
        let mut record_good = Vec::new();
        let quarters = quarter_ends(dates[first_week], dates[spec.weeks - 1]);
        for (qi, &q) in quarters.iter().enumerate() {
            let week = (q - dates[first_week]).num_days() as usize / 7;
            let ahead = (week + spec.lead_weeks).min(n - 2);
            let good = regimes.iter().rev().find(|r| r.start <= ahead).expect("regime").good;
            let sign = if good { 1.0 } else { -1.0 };
            let mut values = Vec::with_capacity(spec.n_features);
            for j in 0..spec.n_features {
                state[j] = 0.7 * state[j] + 0.714 * normal.sample(&mut rng);
                let (offset, scale) = scales[j];
                let z = if j == spec.planted_feature {
                    sign + 0.15 * normal.sample(&mut rng)
                } else {
                    state[j]
                };
                let missing_draw: f64 = rng.random();
                let is_key = spec.key_ratios.contains(&j);
                let missing = if is_key {
                    sparse_idx == Some(c) && j == spec.key_ratios[0] && qi % 2 == 0
                } else {
                    j != spec.planted_feature && missing_draw < spec.missing_rate
                };
                values.push((!missing).then_some(offset + scale * z));
            }
            records.push(FeatureRecord {
                ticker: ticker.clone(),
                quarter_end: q,
                values,
            });
            record_good.push((q, good));
        }
        all_records.extend(records.iter().cloned());
        companies.push(CompanyDataset::new(stock, market.clone(), records));
        truths.push(CompanyTruth {
            ticker,
            first_week,
            changes,
            regimes,
            record_good,
        });
    }

    Ok(SynthOutput {
        companies,
        market,
        fundamentals: Fundamentals {
            feature_names: names,
            records: all_records,
        },
        truth: GroundTruth {
            companies: truths,
            planted_feature: spec.planted_feature,
        },
    })
}

/// Writes `prices/<ticker>.csv`, `market.csv`, `fundamentals.csv` and the
/// truth tables under `dir`.
pub fn write_fixture(dir: &Path, out: &SynthOutput) -> Result<()> {
    let prices = dir.join("prices");
    std::fs::create_dir_all(&prices).map_err(|e| Error::io(&prices, e))?;
    for c in &out.companies {
        write_prices(&prices.join(format!("{}.csv", c.ticker)), &c.stock)?;
    }
    write_prices(&dir.join("market.csv"), &out.market)?;
    write_fundamentals(&dir.join("fundamentals.csv"), &out.fundamentals)?;

    let path = dir.join("truth_changes.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["ticker", "index", "drift_shift", "recoverable"])?;
    for t in &out.truth.companies {
        for ch in &t.changes {
            w.write_record([
                t.ticker.clone(),
                ch.index.to_string(),
                ch.drift_shift.to_string(),
                u8::from(ch.recoverable).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("truth_regimes.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["ticker", "start", "end", "excess_drift", "good"])?;
    for t in &out.truth.companies {
        for r in &t.regimes {
            w.write_record([
                t.ticker.clone(),
                r.start.to_string(),
                r.end.to_string(),
                r.excess_drift.to_string(),
                u8::from(r.good).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("truth_records.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["ticker", "quarter_end", "good"])?;
    for t in &out.truth.companies {
        for (d, g) in &t.record_good {
            w.write_record([
                t.ticker.clone(),
                d.format(DATE_FORMAT).to_string(),
                u8::from(*g).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Reads `truth_records.csv` as `(ticker, quarter_end) -> good`.
pub fn read_record_truth(path: &Path) -> Result<std::collections::BTreeMap<(String, NaiveDate), bool>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = std::collections::BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 2,
            message,
        };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[1], DATE_FORMAT).map_err(|e| bad(e.to_string()))?;
        out.insert((rec[0].to_string(), date), &rec[2] == "1");
    }
    Ok(out)
}

/// A plain series with piecewise-constant drift: `n_changes` change points
/// at least `min_gap` apart, drift alternating between `+shift/2` and
/// `-shift/2`, Gaussian increments with standard deviation `sigma`.
/// Returns the series and the true change indices.
pub fn regime_walk(
    seed: u64,
    len: usize,
    n_changes: usize,
    min_gap: usize,
    sigma: f64,
    shift: f64,
) -> (Vec<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cps = random_changes(&mut rng, len, n_changes, min_gap);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let half = shift / 2.0;
    let mut x = Vec::with_capacity(len);
    let mut level = 0.0;
    x.push(level);
    for i in 1..len {
        let regime = cps.iter().filter(|&&c| c < i).count();
        let d = if regime % 2 == 0 { sign * half } else { -sign * half };
        let z: f64 = StandardNormal.sample(&mut rng);
        level += d + sigma * z;
        x.push(level);
    }
    (x, cps)
}

/// Driftless Gaussian random walk.
pub fn random_walk(seed: u64, len: usize, sigma: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    walk(&mut rng, 1.0, &vec![0.0; len.saturating_sub(1)], sigma, None)
}
