//! Flat `key = value` run configuration.
//!
//! Keys may be written fully qualified (`som.rows = 12`) or under a
//! `[som]` section header. `#` starts a comment. Relative paths resolve
//! against the directory of the file they were read from.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::changepoint::{CusumGrid, TargetSize};
use crate::error::{Error, Result};
use crate::fwc::WeightMode;
use crate::ingest::{DATE_FORMAT, DEFAULT_MIN_QUARTERS};
use crate::labeling::SlidingWindow;
use crate::scalar::derive_seed;
use crate::som::InitMethod;

const EXT_STREAM: u64 = 11;
const SOM_STREAM: u64 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub prices_dir: PathBuf,
    pub market_file: PathBuf,
    pub fundamentals_file: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub target_size: TargetSize,
    /// CUSUM tuning grid, in units of the difference series' std.
    pub cusum_thresholds: Vec<f64>,
    pub cusum_drifts: Vec<f64>,
    pub split_date: NaiveDate,
    pub feature_k: usize,
    pub min_quarters: usize,
    pub key_ratios: Vec<String>,
    pub max_missing_fraction: f64,
    pub n_trees: usize,
    pub ext_seed: Option<u64>,
    pub som_rows: usize,
    pub som_cols: usize,
    pub som_epochs: usize,
    pub som_init: InitMethod,
    pub som_seed: Option<u64>,
    /// `None` means `max(rows, cols) / 4`.
    pub som_radius_start: Option<f64>,
    pub som_radius_end: f64,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
    pub weight_mode: WeightMode,
    pub alpha: f64,
    pub power: f64,
    pub min_annual_return: f64,
    pub sliding_window: SlidingWindow,
    /// 0 ranks every test vector.
    pub top_n: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prices_dir: PathBuf::from("prices"),
            market_file: PathBuf::from("market.csv"),
            fundamentals_file: PathBuf::from("fundamentals.csv"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            target_size: TargetSize::Medium,
            cusum_thresholds: CusumGrid::<f64>::default().thresholds,
            cusum_drifts: CusumGrid::<f64>::default().drifts,
            split_date: NaiveDate::from_ymd_opt(2013, 1, 1).expect("valid date"),
            feature_k: 25,
            min_quarters: DEFAULT_MIN_QUARTERS,
            key_ratios: Vec::new(),
            max_missing_fraction: 0.3,
            n_trees: 100,
            ext_seed: None,
            som_rows: 50,
            som_cols: 50,
            som_epochs: 20,
            som_init: InitMethod::RandomSample,
            som_seed: None,
            som_radius_start: None,
            som_radius_end: 1.0,
            kernel_size: 5,
            kernel_sigma: 1.0,
            weight_mode: WeightMode::GoodCount,
            alpha: 0.05,
            power: 0.8,
            min_annual_return: 0.05,
            sliding_window: SlidingWindow::Disabled,
            top_n: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidInput(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn show_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

/// Every recognized key, in canonical order.
pub const KEYS: &[&str] = &[
    "paths.prices_dir",
    "paths.market",
    "paths.fundamentals",
    "paths.output_dir",
    "seed",
    "target_size",
    "segment.thresholds",
    "segment.drifts",
    "split_date",
    "feature_k",
    "ingest.min_quarters",
    "ingest.key_ratios",
    "select.max_missing_fraction",
    "select.n_trees",
    "select.seed",
    "som.rows",
    "som.cols",
    "som.epochs",
    "som.init",
    "som.seed",
    "som.radius_start",
    "som.radius_end",
    "fwc.kernel_size",
    "fwc.sigma",
    "fwc.weight",
    "labeling.alpha",
    "labeling.power",
    "labeling.min_annual_return",
    "labeling.sliding_window",
    "rank.top_n",
];

impl PipelineConfig {
    /// Parses config text; relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::InvalidInput(format!(
                    "config line {}: expected `key = value`",
                    i + 1
                )));
            };
            let k = k.trim();
            let key = if section.is_empty() || k.contains('.') {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            cfg.set(&key, v.trim())
                .map_err(|e| Error::InvalidInput(format!("config line {}: {e}", i + 1)))?;
        }
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.prices_dir,
            &mut self.market_file,
            &mut self.fundamentals_file,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "paths.prices_dir" => self.prices_dir = PathBuf::from(v),
            "paths.market" => self.market_file = PathBuf::from(v),
            "paths.fundamentals" => self.fundamentals_file = PathBuf::from(v),
            "paths.output_dir" => self.output_dir = PathBuf::from(v),
            "seed" => self.seed = parse(key, v)?,
            "target_size" => self.target_size = parse(key, v)?,
            "segment.thresholds" => self.cusum_thresholds = parse_list(key, v)?,
            "segment.drifts" => self.cusum_drifts = parse_list(key, v)?,
            "split_date" => {
                self.split_date =
                    NaiveDate::parse_from_str(v, DATE_FORMAT).map_err(|e| Error::InvalidInput(format!("{key}: {e}")))?
            }
            "feature_k" => self.feature_k = parse(key, v)?,
            "ingest.min_quarters" => self.min_quarters = parse(key, v)?,
            "ingest.key_ratios" => {
                self.key_ratios = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "select.max_missing_fraction" => self.max_missing_fraction = parse(key, v)?,
            "select.n_trees" => self.n_trees = parse(key, v)?,
            "select.seed" => self.ext_seed = parse_opt(key, v)?,
            "som.rows" => self.som_rows = parse(key, v)?,
            "som.cols" => self.som_cols = parse(key, v)?,
            "som.epochs" => self.som_epochs = parse(key, v)?,
            "som.init" => self.som_init = parse(key, v)?,
            "som.seed" => self.som_seed = parse_opt(key, v)?,
            "som.radius_start" => self.som_radius_start = parse_opt(key, v)?,
            "som.radius_end" => self.som_radius_end = parse(key, v)?,
            "fwc.kernel_size" => self.kernel_size = parse(key, v)?,
            "fwc.sigma" => self.kernel_sigma = parse(key, v)?,
            "fwc.weight" => self.weight_mode = parse(key, v)?,
            "labeling.alpha" => self.alpha = parse(key, v)?,
            "labeling.power" => self.power = parse(key, v)?,
            "labeling.min_annual_return" => self.min_annual_return = parse(key, v)?,
            "labeling.sliding_window" => {
                self.sliding_window = match v {
                    "off" => SlidingWindow::Disabled,
                    s => SlidingWindow::Stride(parse::<usize>(key, s)?.max(1)),
                }
            }
            "rank.top_n" => self.top_n = parse(key, v)?,
            other => return Err(Error::InvalidInput(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides (command-line flags win over the file).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Path| p.display().to_string();
        Some(match key {
            "paths.prices_dir" => path(&self.prices_dir),
            "paths.market" => path(&self.market_file),
            "paths.fundamentals" => path(&self.fundamentals_file),
            "paths.output_dir" => path(&self.output_dir),
            "seed" => self.seed.to_string(),
            "target_size" => self.target_size.to_string(),
            "segment.thresholds" => show_list(&self.cusum_thresholds),
            "segment.drifts" => show_list(&self.cusum_drifts),
            "split_date" => self.split_date.format(DATE_FORMAT).to_string(),
            "feature_k" => self.feature_k.to_string(),
            "ingest.min_quarters" => self.min_quarters.to_string(),
            "ingest.key_ratios" => self.key_ratios.join(","),
            "select.max_missing_fraction" => self.max_missing_fraction.to_string(),
            "select.n_trees" => self.n_trees.to_string(),
            "select.seed" => show_opt(&self.ext_seed),
            "som.rows" => self.som_rows.to_string(),
            "som.cols" => self.som_cols.to_string(),
            "som.epochs" => self.som_epochs.to_string(),
            "som.init" => self.som_init.as_str().to_string(),
            "som.seed" => show_opt(&self.som_seed),
            "som.radius_start" => show_opt(&self.som_radius_start),
            "som.radius_end" => self.som_radius_end.to_string(),
            "fwc.kernel_size" => self.kernel_size.to_string(),
            "fwc.sigma" => self.kernel_sigma.to_string(),
            "fwc.weight" => self.weight_mode.as_str().to_string(),
            "labeling.alpha" => self.alpha.to_string(),
            "labeling.power" => self.power.to_string(),
            "labeling.min_annual_return" => self.min_annual_return.to_string(),
            "labeling.sliding_window" => match self.sliding_window {
                SlidingWindow::Disabled => "off".to_string(),
                SlidingWindow::Stride(s) => s.to_string(),
            },
            "rank.top_n" => self.top_n.to_string(),
            _ => return None,
        })
    }

    /// Canonical `key = value` text; round-trips through [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.feature_k == 0 || self.min_quarters == 0 || self.n_trees == 0 {
            return bad("feature_k, ingest.min_quarters and select.n_trees must be positive".into());
        }
        if self.cusum_thresholds.is_empty()
            || self.cusum_drifts.is_empty()
            || self.cusum_thresholds.iter().any(|t| !(*t > 0.0))
            || self.cusum_drifts.iter().any(|d| !(*d >= 0.0))
        {
            return bad("segment.thresholds must be positive and segment.drifts non-negative, both non-empty".into());
        }
        if self.som_rows == 0 || self.som_cols == 0 {
            return bad("som.rows and som.cols must be positive".into());
        }
        if self.kernel_size.is_multiple_of(2) || !(self.kernel_sigma > 0.0) {
            return bad("fwc.kernel_size must be odd and fwc.sigma positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0 && self.power > 0.0 && self.power < 1.0) {
            return bad("labeling.alpha and labeling.power must lie in (0, 1)".into());
        }
        if !(self.som_radius_end > 0.0) || self.som_radius_start.is_some_and(|r| r < self.som_radius_end) {
            return bad("need som.radius_start >= som.radius_end > 0".into());
        }
        if !(0.0..=1.0).contains(&self.max_missing_fraction) {
            return bad("select.max_missing_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn ext_seed(&self) -> u64 {
        self.ext_seed.unwrap_or_else(|| derive_seed(self.seed, EXT_STREAM))
    }

    pub fn som_seed(&self) -> u64 {
        self.som_seed.unwrap_or_else(|| derive_seed(self.seed, SOM_STREAM))
    }

    pub fn radius_start(&self) -> f64 {
        self.som_radius_start
            .unwrap_or_else(|| (self.som_rows.max(self.som_cols) as f64 / 4.0).max(self.som_radius_end))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_flat_keys() {
        let text = "seed = 3\n[som]\nrows = 7 # trailing comment\ncols=9\nfwc.weight = fraction_only\n";
        let cfg = PipelineConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!((cfg.seed, cfg.som_rows, cfg.som_cols), (3, 7, 9));
        assert_eq!(cfg.weight_mode, WeightMode::FractionOnly);
        assert_eq!(cfg.prices_dir, Path::new("/base/prices"));
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_overrides(&["som.seed=5", "labeling.sliding_window=4", "ingest.key_ratios=a, b"])
            .unwrap();
        let again = PipelineConfig::parse(&cfg.to_text(), Path::new("")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_input_rejected() {
        assert!(PipelineConfig::parse("nonsense", Path::new("")).is_err());
        assert!(PipelineConfig::parse("som.rows = x", Path::new("")).is_err());
        assert!(PipelineConfig::parse("som.shape = hex", Path::new("")).is_err());
        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply_overrides(&["seed"]).is_err());
        cfg.kernel_size = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seeds_derive_from_root() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { seed: 1, ..a.clone() };
        assert_ne!(a.som_seed(), b.som_seed());
        assert_ne!(a.som_seed(), a.ext_seed());
        let pinned = PipelineConfig { som_seed: Some(9), ..a };
        assert_eq!(pinned.som_seed(), 9);
    }
}
