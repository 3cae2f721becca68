//! Unit scores from training votes, and ranking of unseen vectors by the
//! score of their best-matching unit.
//!
//! Each training row votes "good" or "bad" for its BMU. A unit's score is
//! its good-vote fraction weighted by vote mass, then smoothed over the
//! lattice with a normalized Gaussian kernel (edge-replicate padding).

use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::featsel::{FeatureMatrix, Provenance};
use crate::grid::Grid;
use crate::ingest::DATE_FORMAT;
use crate::scalar::Scalar;
use crate::som::{bmu_all, SomGrid};

pub const DEFAULT_KERNEL_SIZE: usize = 5;
pub const DEFAULT_KERNEL_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Votes {
    pub good: u64,
    pub bad: u64,
}

pub type VoteGrid = Grid<Votes>;

/// Tallies each row's label at its BMU.
pub fn accumulate_votes<T: Scalar>(grid: &SomGrid<T>, data: &FeatureMatrix<T>, labels: &[u8]) -> Result<VoteGrid> {
    if labels.len() != data.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} rows",
            labels.len(),
            data.rows()
        )));
    }
    let mut votes = vec![Votes::default(); grid.n_units()];
    if data.rows() > 0 {
        for (&(u, _), &l) in bmu_all(grid, data)?.iter().zip(labels) {
            if l == 1 {
                votes[u].good += 1;
            } else {
                votes[u].bad += 1;
            }
        }
    }
    Grid::from_vec(grid.rows(), grid.cols(), votes)
}

/// How votes become a unit score before smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// `g * g / (g + b)`: good fraction weighted by the good count.
    #[default]
    GoodCount,
    /// `g / (g + b)` alone.
    FractionOnly,
    /// `g * g / b`, with `b` floored at 1.
    GoodOverBad,
}

impl WeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::GoodCount => "good_count",
            WeightMode::FractionOnly => "fraction_only",
            WeightMode::GoodOverBad => "good_over_bad",
        }
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "good_count" => Ok(WeightMode::GoodCount),
            "fraction_only" => Ok(WeightMode::FractionOnly),
            "good_over_bad" => Ok(WeightMode::GoodOverBad),
            other => Err(Error::invalid(format!("unknown weight mode {other:?}"))),
        }
    }
}

/// Per-unit score; units without votes score 0.
pub fn fractional_weighted<T: Scalar>(votes: &VoteGrid, mode: WeightMode) -> Grid<T> {
    votes.map(|v| {
        let (g, b) = (T::of(v.good as f64), T::of(v.bad as f64));
        if v.good == 0 {
            return T::zero();
        }
        match mode {
            WeightMode::GoodCount => g * g / (g + b),
            WeightMode::FractionOnly => g / (g + b),
            WeightMode::GoodOverBad => g * g / b.max(T::one()),
        }
    })
}

/// `size x size` Gaussian sampled at integer offsets, normalized to sum 1.
pub fn gaussian_kernel<T: Scalar>(size: usize, sigma: T) -> Result<Grid<T>> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::invalid(format!("kernel size must be odd and >= 1, got {size}")));
    }
    if !(sigma > T::zero() && sigma.is_finite()) {
        return Err(Error::invalid(format!("kernel sigma must be positive, got {sigma}")));
    }
    let half = (size / 2) as f64;
    let s = sigma.as_f64();
    let raw: Vec<f64> = (0..size * size)
        .map(|i| {
            let dy = (i / size) as f64 - half;
            let dx = (i % size) as f64 - half;
            (-(dx * dx + dy * dy) / (2.0 * s * s)).exp()
        })
        .collect();
    let z: f64 = raw.iter().sum();
    Grid::from_vec(size, size, raw.into_iter().map(|v| T::of(v / z)).collect())
}

/// Same-size 2-D convolution with edge-replicate padding.
pub fn convolve<T: Scalar>(scores: &Grid<T>, kernel: &Grid<T>) -> Result<Grid<T>> {
    if kernel.rows().is_multiple_of(2) || kernel.cols().is_multiple_of(2) {
        return Err(Error::invalid("kernel dimensions must be odd"));
    }
    let (rows, cols) = (scores.rows(), scores.cols());
    let (hr, hc) = ((kernel.rows() / 2) as isize, (kernel.cols() / 2) as isize);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Grid::filled(rows, cols, T::zero());
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = T::zero();
            for kr in 0..kernel.rows() {
                let sr = clamp(r as isize + kr as isize - hr, rows);
                for kc in 0..kernel.cols() {
                    let sc = clamp(c as isize + kc as isize - hc, cols);
                    acc += *kernel.get(kr, kc) * *scores.get(sr, sc);
                }
            }
            out.set(r, c, acc);
        }
    }
    Ok(out)
}

/// Smoothed unit-score grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FwcMatrix<T> {
    pub scores: Grid<T>,
    pub kernel_size: usize,
    pub kernel_sigma: T,
}

/// Votes → weighted fractions → Gaussian smoothing.
pub fn fwc_matrix<T: Scalar>(
    votes: &VoteGrid,
    mode: WeightMode,
    kernel_size: usize,
    kernel_sigma: T,
) -> Result<FwcMatrix<T>> {
    let kernel = gaussian_kernel(kernel_size, kernel_sigma)?;
    let scores = convolve(&fractional_weighted(votes, mode), &kernel)?;
    Ok(FwcMatrix {
        scores,
        kernel_size,
        kernel_sigma,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry<T> {
    pub rank: usize,
    pub ticker: String,
    pub date: NaiveDate,
    pub unit: usize,
    pub unit_row: usize,
    pub unit_col: usize,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult<T> {
    pub entries: Vec<RankedEntry<T>>,
}

/// Scores each test row by the FWC value at its BMU and returns the top
/// `n` (all rows when `n` exceeds the count). Order: score descending,
/// then ticker, date, unit.
pub fn rank_vectors<T: Scalar>(
    fwc: &FwcMatrix<T>,
    grid: &SomGrid<T>,
    test: &FeatureMatrix<T>,
    provenance: &[Provenance],
    n: usize,
) -> Result<RankedResult<T>> {
    if provenance.len() != test.rows() {
        return Err(Error::invalid(format!(
            "{} provenance entries for {} rows",
            provenance.len(),
            test.rows()
        )));
    }
    if fwc.scores.rows() != grid.rows() || fwc.scores.cols() != grid.cols() {
        return Err(Error::invalid("score grid does not match the map lattice"));
    }
    let assign = if test.rows() == 0 {
        Vec::new()
    } else {
        bmu_all(grid, test)?
    };
    let mut entries: Vec<RankedEntry<T>> = assign
        .iter()
        .zip(provenance)
        .map(|(&(u, _), p)| {
            let (unit_row, unit_col) = grid.coords(u);
            RankedEntry {
                rank: 0,
                ticker: p.ticker.clone(),
                date: p.date,
                unit: u,
                unit_row,
                unit_col,
                score: *fwc.scores.at(u),
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .as_f64()
            .total_cmp(&a.score.as_f64())
            .then_with(|| a.ticker.cmp(&b.ticker))
            .then(a.date.cmp(&b.date))
            .then(a.unit.cmp(&b.unit))
    });
    entries.truncate(n);
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(RankedResult { entries })
}

const RANKING_HEADER: [&str; 6] = ["rank", "ticker", "date", "unit_row", "unit_col", "score"];

pub fn write_ranking<T: Scalar>(path: &Path, ranked: &RankedResult<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RANKING_HEADER)?;
    for e in &ranked.entries {
        w.write_record([
            e.rank.to_string(),
            e.ticker.clone(),
            e.date.format(DATE_FORMAT).to_string(),
            e.unit_row.to_string(),
            e.unit_col.to_string(),
            e.score.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a ranking CSV back; `cols` is the lattice width used to rebuild
/// unit indices.
pub fn read_ranking(path: &Path, cols: usize) -> Result<RankedResult<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RANKING_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", RANKING_HEADER.join(",")),
        });
    }
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let num = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|e| bad(format!("{}: {e}", RANKING_HEADER[k])))
        };
        let (unit_row, unit_col) = (num(3)?, num(4)?);
        entries.push(RankedEntry {
            rank: num(0)?,
            ticker: rec[1].to_string(),
            date: NaiveDate::parse_from_str(&rec[2], DATE_FORMAT).map_err(|e| bad(format!("date: {e}")))?,
            unit: unit_row * cols + unit_col,
            unit_row,
            unit_col,
            score: rec[5].parse().map_err(|e| bad(format!("score: {e}")))?,
        });
    }
    Ok(RankedResult { entries })
}
