//! CSV artifacts exchanged between stages, and content hashing.

use std::path::Path;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featsel::{FeatureMatrix, ImportanceRanking, PcaResult, Provenance};
use crate::ingest::DATE_FORMAT;
use crate::labeling::LabeledVector;

pub const INCLUSION: &str = "inclusion.csv";
pub const SEGMENTS: &str = "segments.csv";
pub const LABELED: &str = "labeled.csv";
pub const SELECTED: &str = "selected.csv";
pub const PCA: &str = "pca.csv";
pub const CLEAN_MATRIX: &str = "clean_matrix.csv";
pub const TRAIN_MATRIX: &str = "train_matrix.csv";
pub const TEST_MATRIX: &str = "test_matrix.csv";
pub const CODEBOOK: &str = "codebook.bin";
pub const CODEBOOK_CSV: &str = "codebook.csv";
pub const TRAINING: &str = "training.csv";
pub const UMATRIX: &str = "umatrix.csv";
pub const LCP: &str = "lcp.csv";
pub const FWC: &str = "fwc.csv";
pub const RANKING: &str = "ranking.csv";
pub const MANIFEST: &str = "manifest.txt";

/// Artifacts in the order the pipeline writes them.
pub const ALL: &[&str] = &[
    INCLUSION,
    SEGMENTS,
    LABELED,
    SELECTED,
    PCA,
    CLEAN_MATRIX,
    TRAIN_MATRIX,
    TEST_MATRIX,
    CODEBOOK,
    CODEBOOK_CSV,
    TRAINING,
    UMATRIX,
    LCP,
    FWC,
    RANKING,
];

fn date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub struct SegmentRow<'a> {
    pub ticker: &'a str,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub start_idx: usize,
    pub end_idx: usize,
}

pub fn write_segments(path: &Path, rows: &[SegmentRow<'_>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ticker", "start_date", "end_date", "start_idx", "end_idx"])?;
    for r in rows {
        w.write_record([
            r.ticker.to_string(),
            date(r.start_date),
            date(r.end_date),
            r.start_idx.to_string(),
            r.end_idx.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `ticker,start_date,end_date,label,method,p_value,<raw features>`.
pub fn write_labeled(
    path: &Path,
    vectors: &[LabeledVector],
    end_dates: &[NaiveDate],
    feature_names: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["ticker", "start_date", "end_date", "label", "method", "p_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(feature_names.iter().cloned());
    w.write_record(&header)?;
    for (v, end) in vectors.iter().zip(end_dates) {
        let mut row = vec![
            v.ticker.clone(),
            date(v.date),
            date(*end),
            v.label.to_string(),
            v.method.as_str().to_string(),
            v.p_value.to_string(),
        ];
        row.extend(
            v.features
                .iter()
                .map(|x| if x.is_finite() { x.to_string() } else { String::new() }),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `rank,feature,score` for the first `k` ranked columns.
pub fn write_selected(path: &Path, ranking: &ImportanceRanking, names: &[String], k: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "feature", "score"])?;
    for (i, &c) in ranking.order.iter().take(k).enumerate() {
        w.write_record([(i + 1).to_string(), names[c].clone(), ranking.scores[c].to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `component,explained_variance_ratio`, components numbered from 1.
pub fn write_pca(path: &Path, pca: &PcaResult<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["component", "explained_variance_ratio"])?;
    for (i, r) in pca.explained_variance_ratio.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pca(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["component", "explained_variance_ratio"] {
        return Err(parse_error(
            path,
            1,
            "expected header component,explained_variance_ratio",
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(
            rec[1]
                .parse()
                .map_err(|e| parse_error(path, i as u64 + 2, format!("{e}")))?,
        );
    }
    Ok(out)
}

pub fn write_training(path: &Path, errors: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "quantization_error"])?;
    for (e, q) in errors.iter().enumerate() {
        w.write_record([e.to_string(), q.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A feature matrix with provenance and optional labels, as written by
/// [`write_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub matrix: FeatureMatrix<f64>,
    pub labels: Option<Vec<u8>>,
}

/// `ticker,date[,label],<features>`; empty cells are missing values.
pub fn write_matrix(path: &Path, m: &FeatureMatrix<f64>, labels: Option<&[u8]>) -> Result<()> {
    if labels.is_some_and(|l| l.len() != m.rows()) {
        return Err(Error::invalid("label count does not match matrix rows"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["ticker".to_string(), "date".to_string()];
    if labels.is_some() {
        header.push("label".into());
    }
    header.extend(m.col_names().iter().cloned());
    w.write_record(&header)?;
    for r in 0..m.rows() {
        let p = &m.provenance()[r];
        let mut row = vec![p.ticker.clone(), date(p.date)];
        if let Some(l) = labels {
            row.push(l[r].to_string());
        }
        row.extend(
            m.row(r)
                .iter()
                .map(|x| if x.is_finite() { x.to_string() } else { String::new() }),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "ticker" || header[1] != "date" {
        return Err(parse_error(path, 1, "expected header ticker,date,..."));
    }
    let labeled = header.get(2).is_some_and(|h| h == "label");
    let first_feature = if labeled { 3 } else { 2 };
    let names: Vec<String> = header[first_feature..].to_vec();
    let mut values = Vec::new();
    let mut prov = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        if rec.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        prov.push(Provenance {
            ticker: rec[0].to_string(),
            date: NaiveDate::parse_from_str(&rec[1], DATE_FORMAT)
                .map_err(|e| parse_error(path, line, e.to_string()))?,
        });
        if labeled {
            labels.push(match &rec[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(parse_error(path, line, format!("label must be 0 or 1, got {other:?}"))),
            });
        }
        for f in rec.iter().skip(first_feature) {
            values.push(if f.is_empty() {
                f64::NAN
            } else {
                f.parse()
                    .map_err(|e| parse_error(path, line, format!("bad number {f:?}: {e}")))?
            });
        }
    }
    let matrix = FeatureMatrix::new(prov.len(), names.len(), values, names, prov)?;
    Ok(MatrixFile {
        matrix,
        labels: labeled.then_some(labels),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash over every `*.csv` in a directory, by file name.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().expect("file").to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_with_labels_and_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let prov = vec![
            Provenance {
                ticker: "A".into(),
                date: NaiveDate::from_ymd_opt(2010, 3, 31).unwrap(),
            },
            Provenance {
                ticker: "B".into(),
                date: NaiveDate::from_ymd_opt(2011, 6, 30).unwrap(),
            },
        ];
        let m = FeatureMatrix::new(
            2,
            2,
            vec![0.1, f64::NAN, -2.5, 1e-9],
            vec!["x".into(), "y".into()],
            prov,
        )
        .unwrap();
        write_matrix(&p, &m, Some(&[1, 0])).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(back.labels, Some(vec![1, 0]));
        assert_eq!(back.matrix.provenance(), m.provenance());
        assert_eq!(back.matrix.get(0, 0), 0.1);
        assert!(back.matrix.get(0, 1).is_nan());

        write_matrix(&p, &m, None).unwrap();
        assert_eq!(read_matrix(&p).unwrap().labels, None);
    }

    #[test]
    fn malformed_matrix_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "ticker,date,label,x\nA,2010-01-01,2,1.0\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "name,x\nA,1\n").unwrap();
        assert!(read_matrix(&p).is_err());
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
