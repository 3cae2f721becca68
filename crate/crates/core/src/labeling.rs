//! Interval labeling: stock vs market weekly log returns, gated by a
//! power-based minimum sample size and a normality check.

use chrono::NaiveDate;

use crate::changepoint::IntervalSet;
use crate::error::{Error, Result};
use crate::ingest::CompanyDataset;
use crate::scalar::sample_variance;
use crate::stats::{mann_whitney_one_tailed, normal_quantile, normality_check, welch_one_tailed, Normality};

/// Minimum detectable effect, test levels and the z-scores feeding the
/// sample-size rule `n > ((z_alpha + z_beta) * sigma / tau)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSpec {
    pub min_annual_return: f64,
    pub power: f64,
    pub alpha: f64,
    pub z_alpha: f64,
    pub z_beta: f64,
}

impl Default for PowerSpec {
    fn default() -> Self {
        PowerSpec {
            min_annual_return: 0.05,
            power: 0.80,
            alpha: 0.05,
            z_alpha: 1.64,
            z_beta: 0.84,
        }
    }
}

impl PowerSpec {
    /// z-scores rounded to two decimals from `alpha` and `power`.
    pub fn with_levels(min_annual_return: f64, alpha: f64, power: f64) -> Result<Self> {
        let round2 = |x: f64| (x * 100.0).round() / 100.0;
        let spec = PowerSpec {
            min_annual_return,
            power,
            alpha,
            z_alpha: round2(normal_quantile(1.0 - alpha)),
            z_beta: round2(normal_quantile(power)),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if !(self.power > 0.0 && self.power < 1.0) {
            return Err(Error::Domain(format!("power must be in (0,1), got {}", self.power)));
        }
        if !(self.z_alpha + self.z_beta > 0.0) {
            return Err(Error::Domain("z_alpha + z_beta must be positive".into()));
        }
        Ok(())
    }

    pub fn z_total(&self) -> f64 {
        self.z_alpha + self.z_beta
    }
}

/// Returns of one interval: weekly log-return increments of both series
/// and the gross price ratios end/start.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPair {
    pub stock_returns: Vec<f64>,
    pub market_returns: Vec<f64>,
    pub stock_gross: f64,
    pub market_gross: f64,
}

impl ReturnPair {
    pub fn new(stock_returns: Vec<f64>, market_returns: Vec<f64>) -> Result<Self> {
        if stock_returns.len() != market_returns.len() {
            return Err(Error::invalid("stock and market return lists differ in length"));
        }
        let stock_gross = stock_returns.iter().sum::<f64>().exp();
        let market_gross = market_returns.iter().sum::<f64>().exp();
        Ok(ReturnPair {
            stock_returns,
            market_returns,
            stock_gross,
            market_gross,
        })
    }

    /// Returns over indices `start..=end` of an aligned company.
    pub fn from_interval(company: &CompanyDataset, start: usize, end: usize) -> Result<Self> {
        if end <= start || end >= company.log_stock.len() || company.log_market.len() != company.log_stock.len() {
            return Err(Error::invalid(format!(
                "{}: interval ({start}, {end}) outside aligned series of length {}",
                company.ticker,
                company.log_stock.len()
            )));
        }
        let diff = |s: &[f64]| s[start..=end].windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
        let stock_returns = diff(&company.log_stock);
        let market_returns = diff(&company.log_market);
        Ok(ReturnPair {
            stock_returns,
            market_returns,
            stock_gross: (company.log_stock[end] - company.log_stock[start]).exp(),
            market_gross: (company.log_market[end] - company.log_market[start]).exp(),
        })
    }

    pub fn len(&self) -> usize {
        self.stock_returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stock_returns.is_empty()
    }

    pub fn differences(&self) -> Vec<f64> {
        self.stock_returns
            .iter()
            .zip(&self.market_returns)
            .map(|(s, m)| s - m)
            .collect()
    }
}

/// Smallest interval length with the requested power:
/// `tau = ln((r + M_R) / M_R)`, `n = ceil(((z_a + z_b) * sigma / tau)^2)`,
/// never below 2.
pub fn min_sample_size(spec: &PowerSpec, market_gross: f64, sigma: f64) -> Result<usize> {
    if !(market_gross > 0.0) || !market_gross.is_finite() {
        return Err(Error::Domain(format!(
            "market gross return must be positive, got {market_gross}"
        )));
    }
    if !(spec.min_annual_return + market_gross > 0.0) {
        return Err(Error::Domain("min_annual_return + M_R must be positive".into()));
    }
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Domain(format!("sigma must be non-negative, got {sigma}")));
    }
    let tau = ((spec.min_annual_return + market_gross) / market_gross).ln();
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("effect size tau = {tau} is not positive")));
    }
    let n = (spec.z_total() * sigma / tau).powi(2).ceil();
    if !n.is_finite() {
        return Err(Error::Domain("sample size overflow".into()));
    }
    Ok((n as usize).max(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestMethod {
    WelchT,
    MannWhitney,
    Skipped,
}

impl TestMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TestMethod::WelchT => "welch_t",
            TestMethod::MannWhitney => "mann_whitney",
            TestMethod::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalLabel {
    pub interval: (usize, usize),
    /// `None` when skipped.
    pub label: Option<u8>,
    pub method: TestMethod,
    pub p_value: Option<f64>,
    pub required_n: usize,
}

/// Labels one interval: 1 when stock returns beat market returns at
/// level `alpha`. Too-short intervals are skipped; normal differences use
/// Welch's t, anything else Mann–Whitney.
pub fn label_interval(pair: &ReturnPair, spec: &PowerSpec, interval: (usize, usize)) -> Result<IntervalLabel> {
    let diffs = pair.differences();
    let sigma = if diffs.len() >= 2 {
        sample_variance(&diffs).sqrt()
    } else {
        0.0
    };
    let required_n = min_sample_size(spec, pair.market_gross, sigma)?;
    if pair.len() < required_n || pair.len() < 2 {
        return Ok(IntervalLabel {
            interval,
            label: None,
            method: TestMethod::Skipped,
            p_value: None,
            required_n,
        });
    }
    let (method, p) = match normality_check(&diffs) {
        Normality::Normal => (
            TestMethod::WelchT,
            welch_one_tailed(&pair.stock_returns, &pair.market_returns)?.p_value,
        ),
        Normality::NonNormal | Normality::TooSmall => (
            TestMethod::MannWhitney,
            mann_whitney_one_tailed(&pair.stock_returns, &pair.market_returns)?.p_value,
        ),
    };
    Ok(IntervalLabel {
        interval,
        label: Some(u8::from(p < spec.alpha)),
        method,
        p_value: Some(p),
        required_n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlidingWindow {
    /// One label per interval.
    Disabled,
    /// Re-label `(start + j*stride, end)` while it stays longer than the
    /// interval's minimum sample size.
    Stride(usize),
}

/// A raw (pre-selection) feature vector with its label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub ticker: String,
    pub date: NaiveDate,
    /// Raw fundamentals; `NaN` marks missing values.
    pub features: Vec<f64>,
    pub label: u8,
    pub interval: (usize, usize),
    pub method: TestMethod,
    pub p_value: f64,
}

fn emit(company: &CompanyDataset, lab: &IntervalLabel, out: &mut Vec<LabeledVector>) {
    let (Some(label), Some(p)) = (lab.label, lab.p_value) else {
        return;
    };
    let date = company.date_at(lab.interval.0);
    if let Some(rec) = company.vector_at(date) {
        out.push(LabeledVector {
            ticker: company.ticker.clone(),
            date,
            features: rec.values_or_nan(),
            label,
            interval: lab.interval,
            method: lab.method,
            p_value: p,
        });
    }
}

/// Labels every interval of an aligned company, optionally sliding the
/// start forward. Vectors are the latest fundamentals at each start date;
/// skipped intervals and starts without fundamentals emit nothing.
pub fn sliding_window_labels(
    company: &CompanyDataset,
    intervals: &IntervalSet,
    spec: &PowerSpec,
    window: SlidingWindow,
) -> Vec<LabeledVector> {
    let mut out = Vec::new();
    for &(a, b) in &intervals.intervals {
        let Ok(pair) = ReturnPair::from_interval(company, a, b) else {
            continue;
        };
        match window {
            SlidingWindow::Disabled => {
                if let Ok(lab) = label_interval(&pair, spec, (a, b)) {
                    emit(company, &lab, &mut out);
                }
            }
            SlidingWindow::Stride(stride) => {
                let stride = stride.max(1);
                let diffs = pair.differences();
                let sigma = if diffs.len() >= 2 {
                    sample_variance(&diffs).sqrt()
                } else {
                    0.0
                };
                let Ok(n_min) = min_sample_size(spec, pair.market_gross, sigma) else {
                    continue;
                };
                let mut start = a;
                while b - start > n_min {
                    if let Ok(lab) =
                        ReturnPair::from_interval(company, start, b).and_then(|p| label_interval(&p, spec, (start, b)))
                    {
                        emit(company, &lab, &mut out);
                    }
                    start += stride;
                }
            }
        }
    }
    out
}

/// Number of sub-interval starts the sliding window visits for an
/// interval of `len` returns with minimum size `n_min`.
pub fn sliding_window_count(len: usize, n_min: usize, stride: usize) -> usize {
    if len <= n_min {
        return 0;
    }
    (len - n_min - 1) / stride.max(1) + 1
}
