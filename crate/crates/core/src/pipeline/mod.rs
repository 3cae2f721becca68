//! End-to-end run: ingest, segment, label, select, train, rank.
//!
//! Every stage writes its artifacts into the output directory. A full run
//! also writes a manifest of the effective configuration, derived seeds
//! and content hashes of inputs and artifacts; reruns with the same inputs
//! reproduce it byte for byte.

pub mod artifacts;
pub mod config;
pub mod report;

pub use config::PipelineConfig;
pub use report::{report, ReportKind};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use log::info;
use rayon::prelude::*;

use crate::changepoint::{segment, CusumGrid, IntervalSet};
use crate::error::{Error, Result};
use crate::featsel::{
    apply_zscore, clean_features, ext_importance, pca_fit, select_top_k, zscore_normalize, ExtraTreesConfig,
    FeatureMatrix, Provenance,
};
use crate::fwc::{accumulate_votes, fwc_matrix, rank_vectors, write_ranking, FwcMatrix, RankedResult};
use crate::grid::Grid;
use crate::ingest::{
    align_and_log, apply_inclusion_rules, load_fundamentals, load_prices, write_inclusion_report, CompanyDataset,
    DropReason, InclusionReport, SeriesKind,
};
use crate::labeling::{sliding_window_labels, LabeledVector, PowerSpec};
use crate::som::{
    batch_train, init_codebook, project_labels, save_codebook, umatrix, write_codebook_csv, SomGrid, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Segment,
    Label,
    Select,
    Train,
    Rank,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Label => "label",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Rank => "rank",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Stage::Ingest,
            Stage::Segment,
            Stage::Label,
            Stage::Select,
            Stage::Train,
            Stage::Rank,
            Stage::Report,
        ]
        .into_iter()
        .find(|st| st.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown stage {s:?}")))
    }
}

/// A failure tagged with the stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

fn fail<T>(stage: Stage, msg: impl Into<String>) -> StageResult<T> {
    Err(StageError {
        stage,
        source: Error::InvalidInput(msg.into()),
    })
}

/// Output of the ingest stage: aligned companies that passed inclusion.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub companies: Vec<CompanyDataset>,
    pub feature_names: Vec<String>,
    pub report: InclusionReport,
}

/// Output of the label stage.
#[derive(Debug, Clone)]
pub struct Labeled {
    pub vectors: Vec<LabeledVector>,
    pub end_dates: Vec<NaiveDate>,
}

/// Output of the select stage: standardized, selected matrices.
#[derive(Debug, Clone)]
pub struct Selected {
    pub train: FeatureMatrix<f64>,
    pub labels: Vec<u8>,
    pub test: FeatureMatrix<f64>,
    pub selected_features: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub grid: SomGrid<f64>,
    pub quantization_errors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Ranked {
    pub fwc: FwcMatrix<f64>,
    pub ranking: RankedResult<f64>,
}

/// Everything a run produced, up to the last stage executed.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub ingested: Option<Ingested>,
    pub intervals: Option<Vec<IntervalSet>>,
    pub labeled: Option<Labeled>,
    pub selected: Option<Selected>,
    pub trained: Option<Trained>,
    pub ranked: Option<Ranked>,
    /// SHA-256 of the manifest; only set by [`run_pipeline`].
    pub manifest_hash: Option<String>,
}

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

pub fn ingest_stage(cfg: &PipelineConfig) -> StageResult<Ingested> {
    let st = Stage::Ingest;
    let market = load_prices(&cfg.market_file, SeriesKind::Market).at(st)?;
    let fundamentals = load_fundamentals(&cfg.fundamentals_file).at(st)?;
    let key_idx: Vec<usize> = cfg
        .key_ratios
        .iter()
        .map(|k| {
            fundamentals
                .feature_names
                .iter()
                .position(|n| n == k)
                .ok_or_else(|| Error::Validation(format!("key ratio {k:?} is not a fundamentals column")))
        })
        .collect::<Result<_>>()
        .at(st)?;

    let mut price_files: Vec<PathBuf> = std::fs::read_dir(&cfg.prices_dir)
        .map_err(|e| Error::io(&cfg.prices_dir, e))
        .at(st)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    price_files.sort();

    let mut by_ticker = fundamentals.by_ticker();
    let mut report = InclusionReport::default();
    let mut candidates = Vec::new();
    for path in &price_files {
        let stock = load_prices(path, SeriesKind::Stock).at(st)?;
        let records = by_ticker.remove(&stock.ticker).unwrap_or_default();
        let company = CompanyDataset::new(stock, market.clone(), records);
        match align_and_log(&company) {
            Ok(c) => candidates.push(c),
            Err(Error::Alignment(_)) => report.drop(&company.ticker, DropReason::MissingPrices),
            Err(e) => return Err(e).at(st),
        }
    }
    for ticker in by_ticker.into_keys() {
        report.drop(ticker, DropReason::MissingPrices);
    }
    let (companies, inclusion) = apply_inclusion_rules(&candidates, cfg.min_quarters, &key_idx);
    report.kept = inclusion.kept;
    report.dropped.extend(inclusion.dropped);

    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::io(&cfg.output_dir, e))
        .at(st)?;
    write_inclusion_report(&out_path(cfg, artifacts::INCLUSION), &report).at(st)?;
    info!(
        "ingest: kept {} of {} companies",
        companies.len(),
        report.kept.len() + report.dropped.len()
    );
    if companies.is_empty() {
        return fail(st, "no company passed the inclusion rules");
    }
    Ok(Ingested {
        companies,
        feature_names: fundamentals.feature_names,
        report,
    })
}

pub fn segment_stage(cfg: &PipelineConfig, ing: &Ingested) -> StageResult<Vec<IntervalSet>> {
    let st = Stage::Segment;
    let grid = CusumGrid {
        thresholds: cfg.cusum_thresholds.clone(),
        drifts: cfg.cusum_drifts.clone(),
    };
    let sets: Vec<IntervalSet> = ing
        .companies
        .par_iter()
        .map(|c| {
            segment(&c.log_stock, cfg.target_size, &grid, None)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", c.ticker)))
        })
        .collect::<Result<_>>()
        .at(st)?;
    let rows: Vec<artifacts::SegmentRow<'_>> = ing
        .companies
        .iter()
        .zip(&sets)
        .flat_map(|(c, set)| {
            set.intervals.iter().map(move |&(a, b)| artifacts::SegmentRow {
                ticker: &c.ticker,
                start_date: c.date_at(a),
                end_date: c.date_at(b),
                start_idx: a,
                end_idx: b,
            })
        })
        .collect();
    artifacts::write_segments(&out_path(cfg, artifacts::SEGMENTS), &rows).at(st)?;
    info!("segment: {} intervals", rows.len());
    Ok(sets)
}

pub fn power_spec(cfg: &PipelineConfig) -> Result<PowerSpec> {
    PowerSpec::with_levels(cfg.min_annual_return, cfg.alpha, cfg.power)
}

pub fn label_stage(cfg: &PipelineConfig, ing: &Ingested, sets: &[IntervalSet]) -> StageResult<Labeled> {
    let st = Stage::Label;
    let spec = power_spec(cfg).at(st)?;
    let per_company: Vec<Vec<LabeledVector>> = ing
        .companies
        .par_iter()
        .zip(sets)
        .map(|(c, set)| sliding_window_labels(c, set, &spec, cfg.sliding_window))
        .collect();
    let mut vectors = Vec::new();
    let mut end_dates = Vec::new();
    for (c, vs) in ing.companies.iter().zip(per_company) {
        for v in vs {
            end_dates.push(c.date_at(v.interval.1));
            vectors.push(v);
        }
    }
    artifacts::write_labeled(
        &out_path(cfg, artifacts::LABELED),
        &vectors,
        &end_dates,
        &ing.feature_names,
    )
    .at(st)?;
    info!(
        "label: {} vectors, {} good",
        vectors.len(),
        vectors.iter().filter(|v| v.label == 1).count()
    );
    if vectors.is_empty() {
        return fail(st, "no interval produced a label");
    }
    Ok(Labeled { vectors, end_dates })
}

fn raw_matrix(rows: Vec<(Provenance, Vec<f64>)>, names: &[String]) -> Result<FeatureMatrix<f64>> {
    let n = rows.len();
    let mut values = Vec::with_capacity(n * names.len());
    let mut prov = Vec::with_capacity(n);
    for (p, v) in rows {
        values.extend(v);
        prov.push(p);
    }
    FeatureMatrix::new(n, names.len(), values, names.to_vec(), prov)
}

/// Splits by date (labeled vectors before `split_date` train; quarterly
/// records on or after it are ranked), cleans and standardizes with
/// training statistics, ranks features and keeps the top `feature_k`.
pub fn select_stage(cfg: &PipelineConfig, ing: &Ingested, lab: &Labeled) -> StageResult<Selected> {
    let st = Stage::Select;
    let split = cfg.split_date;
    let train_rows: Vec<(Provenance, Vec<f64>)> = lab
        .vectors
        .iter()
        .filter(|v| v.date < split)
        .map(|v| {
            (
                Provenance {
                    ticker: v.ticker.clone(),
                    date: v.date,
                },
                v.features.clone(),
            )
        })
        .collect();
    let labels: Vec<u8> = lab.vectors.iter().filter(|v| v.date < split).map(|v| v.label).collect();
    let test_rows: Vec<(Provenance, Vec<f64>)> = ing
        .companies
        .iter()
        .flat_map(|c| c.records.iter().filter(|r| r.quarter_end >= split))
        .map(|r| {
            (
                Provenance {
                    ticker: r.ticker.clone(),
                    date: r.quarter_end,
                },
                r.values_or_nan(),
            )
        })
        .collect();
    if test_rows.is_empty() {
        return fail(st, format!("empty test set: no records on or after {split}"));
    }
    if train_rows.is_empty() {
        return fail(st, format!("empty training set: no labeled vectors before {split}"));
    }

    let names = &ing.feature_names;
    let train_raw = raw_matrix(train_rows, names).at(st)?;
    let test_raw = raw_matrix(test_rows, names).at(st)?;
    let (train_clean, clean) = clean_features(&train_raw, cfg.max_missing_fraction).at(st)?;
    if train_clean.cols() == 0 {
        return fail(st, "every feature column exceeded the missing-data limit");
    }
    let (train_z, stats) = zscore_normalize(&train_clean).at(st)?;
    let test_z = apply_zscore(&clean.apply(&test_raw).at(st)?, &stats).at(st)?;

    let ext = ExtraTreesConfig::new(cfg.n_trees, cfg.ext_seed());
    let ranking = ext_importance(&train_z, &labels, &ext).at(st)?;
    let k = cfg.feature_k.min(train_z.cols());
    let train = select_top_k(&ranking, &train_z, k).at(st)?;
    let test = select_top_k(&ranking, &test_z, k).at(st)?;
    let pca = pca_fit(&train_z, train_z.cols()).at(st)?;

    artifacts::write_selected(&out_path(cfg, artifacts::SELECTED), &ranking, train_z.col_names(), k).at(st)?;
    artifacts::write_pca(&out_path(cfg, artifacts::PCA), &pca).at(st)?;
    artifacts::write_matrix(&out_path(cfg, artifacts::CLEAN_MATRIX), &train_z, Some(&labels)).at(st)?;
    artifacts::write_matrix(&out_path(cfg, artifacts::TRAIN_MATRIX), &train, Some(&labels)).at(st)?;
    artifacts::write_matrix(&out_path(cfg, artifacts::TEST_MATRIX), &test, None).at(st)?;
    info!(
        "select: {} train rows, {} test rows, {} of {} features",
        train.rows(),
        test.rows(),
        k,
        names.len()
    );
    Ok(Selected {
        selected_features: train.col_names().to_vec(),
        train,
        labels,
        test,
    })
}

pub fn train_config(cfg: &PipelineConfig) -> TrainConfig<f64> {
    TrainConfig {
        epochs: cfg.som_epochs,
        radius_start: cfg.radius_start(),
        radius_end: cfg.som_radius_end,
        seed: cfg.som_seed(),
        init: cfg.som_init,
    }
}

pub fn train_stage(cfg: &PipelineConfig, sel: &Selected) -> StageResult<Trained> {
    let st = Stage::Train;
    let tc = train_config(cfg);
    let init = init_codebook(&sel.train, cfg.som_rows, cfg.som_cols, &tc).at(st)?;
    let trained = batch_train(&init, &sel.train, &tc).at(st)?;
    let grid = trained.grid;
    save_codebook(&out_path(cfg, artifacts::CODEBOOK), &grid).at(st)?;
    write_codebook_csv(&out_path(cfg, artifacts::CODEBOOK_CSV), &grid, sel.train.col_names()).at(st)?;
    artifacts::write_training(&out_path(cfg, artifacts::TRAINING), &trained.quantization_errors).at(st)?;
    umatrix(&grid).write_csv(&out_path(cfg, artifacts::UMATRIX)).at(st)?;
    project_labels(&grid, &sel.train, &sel.labels)
        .at(st)?
        .values
        .write_csv(&out_path(cfg, artifacts::LCP))
        .at(st)?;
    info!(
        "train: {}x{} map, quantization error {:.4} -> {:.4}",
        grid.rows(),
        grid.cols(),
        trained.quantization_errors[0],
        trained.quantization_errors.last().copied().unwrap_or(f64::NAN)
    );
    Ok(Trained {
        grid,
        quantization_errors: trained.quantization_errors,
    })
}

pub fn rank_stage(cfg: &PipelineConfig, sel: &Selected, trained: &Trained) -> StageResult<Ranked> {
    let st = Stage::Rank;
    let votes = accumulate_votes(&trained.grid, &sel.train, &sel.labels).at(st)?;
    let fwc = fwc_matrix(&votes, cfg.weight_mode, cfg.kernel_size, cfg.kernel_sigma).at(st)?;
    let n = if cfg.top_n == 0 { sel.test.rows() } else { cfg.top_n };
    let ranking = rank_vectors(&fwc, &trained.grid, &sel.test, sel.test.provenance(), n).at(st)?;
    fwc.scores.write_csv(&out_path(cfg, artifacts::FWC)).at(st)?;
    write_ranking(&out_path(cfg, artifacts::RANKING), &ranking).at(st)?;
    info!("rank: {} vectors ranked", ranking.entries.len());
    Ok(Ranked { fwc, ranking })
}

/// Runs every stage up to and including `last`.
pub fn run_through(cfg: &PipelineConfig, last: Stage) -> StageResult<RunOutcome> {
    cfg.validate().at(Stage::Ingest)?;
    let mut out = RunOutcome::default();
    let ing = ingest_stage(cfg)?;
    if last > Stage::Ingest {
        let sets = segment_stage(cfg, &ing)?;
        if last > Stage::Segment {
            let lab = label_stage(cfg, &ing, &sets)?;
            if last > Stage::Label {
                let sel = select_stage(cfg, &ing, &lab)?;
                if last > Stage::Select {
                    let trained = train_stage(cfg, &sel)?;
                    if last > Stage::Train {
                        out.ranked = Some(rank_stage(cfg, &sel, &trained)?);
                    }
                    out.trained = Some(trained);
                }
                out.selected = Some(sel);
            }
            out.labeled = Some(lab);
        }
        out.intervals = Some(sets);
    }
    out.ingested = Some(ing);
    Ok(out)
}

/// Full pipeline plus manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> StageResult<RunOutcome> {
    let mut out = run_through(cfg, Stage::Rank)?;
    let text = manifest_text(cfg).at(Stage::Rank)?;
    let path = out_path(cfg, artifacts::MANIFEST);
    std::fs::write(&path, &text)
        .map_err(|e| Error::io(&path, e))
        .at(Stage::Rank)?;
    out.manifest_hash = Some(artifacts::sha256_hex(text.as_bytes()));
    Ok(out)
}

/// Configuration (without paths), derived seeds, and content hashes of
/// the inputs and of every artifact.
pub fn manifest_text(cfg: &PipelineConfig) -> Result<String> {
    let mut s = String::from("# run manifest\n");
    for key in config::KEYS.iter().filter(|k| !k.starts_with("paths.")) {
        s.push_str(&format!("config.{key} = {}\n", cfg.get(key).expect("listed key")));
    }
    s.push_str(&format!("seed.select = {}\n", cfg.ext_seed()));
    s.push_str(&format!("seed.som = {}\n", cfg.som_seed()));
    s.push_str(&format!("input.prices = {}\n", artifacts::hash_dir(&cfg.prices_dir)?));
    s.push_str(&format!("input.market = {}\n", artifacts::hash_file(&cfg.market_file)?));
    s.push_str(&format!(
        "input.fundamentals = {}\n",
        artifacts::hash_file(&cfg.fundamentals_file)?
    ));
    for name in artifacts::ALL {
        s.push_str(&format!(
            "artifact.{name} = {}\n",
            artifacts::hash_file(&out_path(cfg, name))?
        ));
    }
    Ok(s)
}

/// Reads an artifact of the output directory, naming its producer when
/// it is missing.
pub(crate) fn require(dir: &Path, name: &str, producer: Stage) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact {
            path: p,
            producer: producer.name(),
        })
    }
}

/// U-matrix, label plane and FWC grid.
pub type LatticeGrids = (Grid<f64>, Grid<Option<f64>>, Grid<f64>);

/// Lattice grids for a trained map, as in the pipeline artifacts.
pub fn lattice_grids(
    cfg: &PipelineConfig,
    grid: &SomGrid<f64>,
    train: &FeatureMatrix<f64>,
    labels: &[u8],
) -> Result<LatticeGrids> {
    let votes = accumulate_votes(grid, train, labels)?;
    let fwc = fwc_matrix(&votes, cfg.weight_mode, cfg.kernel_size, cfg.kernel_sigma)?;
    Ok((umatrix(grid), project_labels(grid, train, labels)?.values, fwc.scores))
}
