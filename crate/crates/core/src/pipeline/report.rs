//! Lattice and diagnostic reports rebuilt from stage artifacts.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{artifacts, lattice_grids, require, PipelineConfig, Stage};
use crate::error::{Error, Result};
use crate::ingest::{load_prices, SeriesKind};
use crate::som::load_codebook;
use crate::stats::qq_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Umat,
    Lcp,
    Fwc,
    Qq,
    Pca,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::Umat => "umat",
            ReportKind::Lcp => "lcp",
            ReportKind::Fwc => "fwc",
            ReportKind::Qq => "qq",
            ReportKind::Pca => "pca",
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "umat" => Ok(ReportKind::Umat),
            "lcp" => Ok(ReportKind::Lcp),
            "fwc" => Ok(ReportKind::Fwc),
            "qq" => Ok(ReportKind::Qq),
            "pca" => Ok(ReportKind::Pca),
            _ => Err(Error::invalid(format!(
                "unknown report {s:?} (umat, lcp, fwc, qq, pca)"
            ))),
        }
    }
}

/// Builds a report as CSV text. Lattice reports read the codebook and
/// training matrix from the output directory; `qq` needs `input`, either a
/// `date,price` series (log returns are plotted) or a one-column `value`
/// file.
pub fn report(cfg: &PipelineConfig, kind: ReportKind, input: Option<&Path>) -> Result<String> {
    let dir = &cfg.output_dir;
    match kind {
        ReportKind::Umat | ReportKind::Lcp | ReportKind::Fwc => {
            let grid = load_codebook::<f64>(&require(dir, artifacts::CODEBOOK, Stage::Train)?)?;
            let train = artifacts::read_matrix(&require(dir, artifacts::TRAIN_MATRIX, Stage::Select)?)?;
            let labels = train
                .labels
                .ok_or_else(|| Error::Validation(format!("{} has no label column", artifacts::TRAIN_MATRIX)))?;
            let (umat, lcp, fwc) = lattice_grids(cfg, &grid, &train.matrix, &labels)?;
            Ok(match kind {
                ReportKind::Umat => umat.csv_text(),
                ReportKind::Lcp => lcp.csv_text(),
                _ => fwc.csv_text(),
            })
        }
        ReportKind::Pca => {
            let ratios = artifacts::read_pca(&require(dir, artifacts::PCA, Stage::Select)?)?;
            let mut s = String::from("component,explained_variance_ratio,cumulative\n");
            let mut cum = 0.0;
            for (i, r) in ratios.iter().enumerate() {
                cum += r;
                writeln!(s, "{},{r},{cum}", i + 1).expect("string write");
            }
            Ok(s)
        }
        ReportKind::Qq => {
            let path = input.ok_or_else(|| Error::invalid("qq report needs an input file"))?;
            let sample = read_sample(path)?;
            let mut s = String::from("theoretical_quantile,sample_quantile\n");
            for (t, q) in qq_points(&sample) {
                writeln!(s, "{t},{q}").expect("string write");
            }
            Ok(s)
        }
    }
}

fn read_sample(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text.lines().next().unwrap_or("").trim();
    if header == "date,price" {
        let series = load_prices(path, SeriesKind::Stock)?;
        return Ok(series
            .points
            .windows(2)
            .map(|w| (w[1].price / w[0].price).ln())
            .collect());
    }
    if header != "value" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header date,price or value, found {header:?}"),
        });
    }
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: format!("bad number {l:?}: {e}"),
            })
        })
        .collect()
}
