//! Feature matrix cleaning, normalization and selection.

mod extra_trees;
mod pca;

pub use extra_trees::{ext_importance, ExtraTreesConfig, ImportanceRanking};
pub use pca::{pca_fit, PcaResult};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::scalar::{median, Scalar};

/// Where a matrix row came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Provenance {
    pub ticker: String,
    pub date: NaiveDate,
}

/// Row-major matrix; non-finite cells are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    col_names: Vec<String>,
    provenance: Vec<Provenance>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<T>,
        col_names: Vec<String>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if col_names.len() != cols {
            return Err(Error::invalid(format!(
                "{} column names for {cols} columns",
                col_names.len()
            )));
        }
        if provenance.len() != rows {
            return Err(Error::invalid(format!(
                "{} provenance entries for {rows} rows",
                provenance.len()
            )));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            values,
            col_names,
            provenance,
        })
    }

    /// Matrix with generated column names `f000..` and blank provenance.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        let names = (0..cols).map(|c| format!("f{c:03}")).collect();
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
        let prov = (0..rows.len())
            .map(|i| Provenance {
                ticker: format!("row{i}"),
                date: epoch,
            })
            .collect();
        Self::new(rows.len(), cols, rows.concat(), names, prov)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Columns in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&c| c >= self.cols) {
            return Err(Error::invalid(format!(
                "column {bad} out of range ({} columns)",
                self.cols
            )));
        }
        let mut values = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            let row = self.row(r);
            values.extend(idx.iter().map(|&c| row[c]));
        }
        Self::new(
            self.rows,
            idx.len(),
            values,
            idx.iter().map(|&c| self.col_names[c].clone()).collect(),
            self.provenance.clone(),
        )
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            rows: idx.len(),
            cols: self.cols,
            values,
            col_names: self.col_names.clone(),
            provenance: idx.iter().map(|&r| self.provenance[r].clone()).collect(),
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> FeatureMatrix<U> {
        FeatureMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            col_names: self.col_names.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

/// What cleaning removed and how the remaining gaps were filled. Also
/// re-applies the same transformation to other matrices (e.g. test rows).
#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport<T> {
    pub dropped_cols: Vec<(String, f64)>,
    pub imputed_cells: usize,
    /// Original indices of the kept columns.
    pub kept_cols: Vec<usize>,
    /// Column medians used for imputation, one per kept column.
    pub medians: Vec<T>,
}

impl<T: Scalar> CleanReport<T> {
    pub fn apply(&self, m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        let mut out = m.select_columns(&self.kept_cols)?;
        let cols = out.cols;
        for (i, v) in out.values.iter_mut().enumerate() {
            if v.is_missing() {
                *v = self.medians[i % cols];
            }
        }
        Ok(out)
    }
}

/// Drops columns whose missing fraction exceeds `max_missing_fraction`,
/// then imputes the remaining gaps with the column median.
pub fn clean_features<T: Scalar>(
    m: &FeatureMatrix<T>,
    max_missing_fraction: f64,
) -> Result<(FeatureMatrix<T>, CleanReport<T>)> {
    if !(0.0..=1.0).contains(&max_missing_fraction) {
        return Err(Error::invalid(format!(
            "max_missing_fraction must be in [0,1], got {max_missing_fraction}"
        )));
    }
    let mut report = CleanReport {
        dropped_cols: Vec::new(),
        imputed_cells: 0,
        kept_cols: Vec::new(),
        medians: Vec::new(),
    };
    for c in 0..m.cols {
        let col = m.column(c);
        let missing = col.iter().filter(|v| v.is_missing()).count();
        let frac = if m.rows == 0 {
            0.0
        } else {
            missing as f64 / m.rows as f64
        };
        if frac > max_missing_fraction {
            report.dropped_cols.push((m.col_names[c].clone(), frac));
            continue;
        }
        let med = match median(&col) {
            Some(v) => v,
            None if missing == 0 => T::zero(),
            None => {
                return Err(Error::Imputation(format!(
                    "column {} has no finite values",
                    m.col_names[c]
                )))
            }
        };
        report.kept_cols.push(c);
        report.medians.push(med);
        report.imputed_cells += missing;
    }
    let out = report.apply(m)?;
    Ok((out, report))
}

/// Mean and population standard deviation of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats<T> {
    pub mean: T,
    pub std: T,
    /// Zero variance: the column standardizes to all zeros.
    pub constant: bool,
}

pub fn column_stats<T: Scalar>(m: &FeatureMatrix<T>) -> Vec<ColumnStats<T>> {
    let n = T::of_usize(m.rows.max(1));
    (0..m.cols)
        .map(|c| {
            let col = m.column(c);
            let mean = col.iter().fold(T::zero(), |a, &b| a + b) / n;
            let var = col.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
            let std = var.sqrt();
            let constant = !(std > T::epsilon() * (T::one() + mean.abs()));
            ColumnStats { mean, std, constant }
        })
        .collect()
}

pub fn apply_zscore<T: Scalar>(m: &FeatureMatrix<T>, stats: &[ColumnStats<T>]) -> Result<FeatureMatrix<T>> {
    if stats.len() != m.cols {
        return Err(Error::invalid("column statistics do not match matrix width"));
    }
    let mut out = m.clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        let s = &stats[i % m.cols];
        *v = if s.constant { T::zero() } else { (*v - s.mean) / s.std };
    }
    Ok(out)
}

/// Standardizes every column to mean 0 and population std 1.
pub fn zscore_normalize<T: Scalar>(m: &FeatureMatrix<T>) -> Result<(FeatureMatrix<T>, Vec<ColumnStats<T>>)> {
    if !m.is_finite() {
        return Err(Error::invalid("zscore_normalize needs a finite matrix"));
    }
    let stats = column_stats(m);
    Ok((apply_zscore(m, &stats)?, stats))
}

/// Keeps the `k` best-ranked columns, best first.
pub fn select_top_k<T: Scalar>(r: &ImportanceRanking, m: &FeatureMatrix<T>, k: usize) -> Result<FeatureMatrix<T>> {
    if k > m.cols || r.order.len() != m.cols {
        return Err(Error::invalid(format!(
            "cannot select {k} of {} columns with a ranking over {}",
            m.cols,
            r.order.len()
        )));
    }
    m.select_columns(&r.order[..k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NAN: f64 = f64::NAN;

    #[test]
    fn clean_drops_and_imputes() {
        // col 0: 1 of 50 missing (2%) -> dropped at 1%
        let mut rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        rows[3][0] = NAN;
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let (out, rep) = clean_features(&m, 0.01).unwrap();
        assert_eq!(out.cols(), 1);
        assert_eq!(rep.dropped_cols, vec![("f000".to_string(), 0.02)]);
        assert_eq!(rep.imputed_cells, 0);

        let m = FeatureMatrix::from_rows(&[vec![1.0], vec![NAN], vec![3.0]]).unwrap();
        let (out, rep) = clean_features(&m, 0.5).unwrap();
        assert_eq!(out.column(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(rep.imputed_cells, 1);
    }

    #[test]
    fn clean_finite_matrix_is_noop() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let (out, rep) = clean_features(&m, 0.0).unwrap();
        assert_eq!(out, m);
        assert_eq!(rep.imputed_cells, 0);
        assert!(rep.dropped_cols.is_empty());
    }

    #[test]
    fn clean_all_missing_with_full_threshold_errors() {
        let m = FeatureMatrix::from_rows(&[vec![NAN, 1.0], vec![f64::INFINITY, 2.0]]).unwrap();
        assert!(matches!(clean_features(&m, 1.0), Err(Error::Imputation(_))));
    }

    #[test]
    fn zscore_closed_form() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let (z, stats) = zscore_normalize(&m).unwrap();
        let c0 = z.column(0);
        let e = 1.224_744_871_391_589f64;
        assert!((c0[0] + e).abs() < 1e-12 && c0[1].abs() < 1e-12 && (c0[2] - e).abs() < 1e-12);
        assert_eq!(z.column(1), vec![0.0; 3]);
        assert!(stats[1].constant && !stats[0].constant);
    }

    #[test]
    fn select_top_k_uses_ranking_order() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let r = ImportanceRanking::from_scores(vec![0.2, 0.5, 0.3]);
        let s = select_top_k(&r, &m, 2).unwrap();
        assert_eq!(s.col_names(), ["f001", "f002"]);
        assert_eq!(s.row(0), [2.0, 3.0]);
        assert_eq!(select_top_k(&r, &m, 3).unwrap().col_names(), ["f001", "f002", "f000"]);
        assert!(select_top_k(&r, &m, 4).is_err());
    }

    proptest! {
        #[test]
        fn zscore_moments_and_idempotence(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40)
        ) {
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            let (z, stats) = zscore_normalize(&m).unwrap();
            for (c, s) in stats.iter().enumerate() {
                let col = z.column(c);
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                if !s.constant {
                    let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                }
            }
            let (zz, _) = zscore_normalize(&z).unwrap();
            for (a, b) in z.values().iter().zip(zz.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn clean_is_idempotent(
            rows in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.9, -10f64..10.0), 4), 1..30),
            thr in 0.0f64..1.0,
        ) {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(NAN)).collect()).collect();
            let m = FeatureMatrix::from_rows(&rows).unwrap();
            if let Ok((once, _)) = clean_features(&m, thr) {
                let (twice, rep) = clean_features(&once, thr).unwrap();
                prop_assert_eq!(&once, &twice);
                prop_assert_eq!(rep.imputed_cells, 0);
            }
        }
    }
}
