//! Rectangular self-organizing map with batch training.
//!
//! Distances tolerate missing (`NaN`) inputs: only present components are
//! compared and the squared sum is rescaled by `dim / present`.

mod io;

pub use io::{load_codebook, save_codebook, write_codebook_csv, CODEBOOK_MAGIC};

use std::cmp::Ordering;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featsel::{pca_fit, FeatureMatrix};
use crate::grid::Grid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SomGrid<T> {
    rows: usize,
    cols: usize,
    dim: usize,
    codebook: Vec<T>,
    pub trained_epochs: usize,
    pub seed: u64,
}

impl<T: Scalar> SomGrid<T> {
    pub fn new(rows: usize, cols: usize, dim: usize, codebook: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::invalid(format!("empty lattice {rows}x{cols}x{dim}")));
        }
        if codebook.len() != rows * cols * dim {
            return Err(Error::invalid(format!(
                "codebook for {rows}x{cols}x{dim} needs {} values, got {}",
                rows * cols * dim,
                codebook.len()
            )));
        }
        if codebook.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("codebook must be finite"));
        }
        Ok(SomGrid {
            rows,
            cols,
            dim,
            codebook,
            trained_epochs: 0,
            seed: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_units(&self) -> usize {
        self.rows * self.cols
    }

    pub fn codebook(&self) -> &[T] {
        &self.codebook
    }

    pub fn unit(&self, idx: usize) -> &[T] {
        &self.codebook[idx * self.dim..(idx + 1) * self.dim]
    }

    /// `(row, col)` of a row-major unit index.
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.cols, idx % self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    RandomSample,
    PcaPlane,
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random_sample" => Ok(InitMethod::RandomSample),
            "pca_plane" => Ok(InitMethod::PcaPlane),
            other => Err(Error::invalid(format!("unknown SOM init {other:?}"))),
        }
    }
}

impl InitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMethod::RandomSample => "random_sample",
            InitMethod::PcaPlane => "pca_plane",
        }
    }
}

/// Batch training schedule: Gaussian neighbourhood whose radius decays
/// linearly from `radius_start` (first epoch) to `radius_end` (last).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub radius_start: T,
    pub radius_end: T,
    pub seed: u64,
    pub init: InitMethod,
}

impl<T: Scalar> TrainConfig<T> {
    /// 20 epochs, radius `max(rows, cols) / 4` down to 1, random-sample init.
    pub fn for_lattice(rows: usize, cols: usize, seed: u64) -> Self {
        let start = (rows.max(cols) as f64 / 4.0).max(1.0);
        TrainConfig {
            epochs: 20,
            radius_start: T::of(start),
            radius_end: T::one(),
            seed,
            init: InitMethod::RandomSample,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_end > T::zero() && self.radius_start >= self.radius_end && self.radius_start.is_finite()) {
            return Err(Error::invalid(format!(
                "need radius_start >= radius_end > 0, got {} and {}",
                self.radius_start, self.radius_end
            )));
        }
        Ok(())
    }

    fn radius(&self, epoch: usize) -> T {
        if self.epochs <= 1 {
            return self.radius_end;
        }
        let f = T::of_usize(epoch) / T::of_usize(self.epochs - 1);
        self.radius_start + (self.radius_end - self.radius_start) * f
    }
}

/// Squared distance over all components, abandoning the sum once it
/// exceeds `bound`.
#[inline]
fn sq_dist_bounded<T: Scalar>(v: &[T], w: &[T], bound: T) -> T {
    let mut acc = T::zero();
    for (cv, cw) in v.chunks(8).zip(w.chunks(8)) {
        let mut part = T::zero();
        for (&a, &b) in cv.iter().zip(cw) {
            let d = a - b;
            part += d * d;
        }
        acc += part;
        if acc > bound {
            return acc;
        }
    }
    acc
}

/// Squared masked distance: present components only, rescaled by
/// `dim / present`. `None` when nothing is present.
fn masked_sq_dist<T: Scalar>(v: &[T], w: &[T]) -> Option<T> {
    let mut acc = T::zero();
    let mut present = 0usize;
    for (cv, cw) in v.chunks(8).zip(w.chunks(8)) {
        let mut part = T::zero();
        for (&a, &b) in cv.iter().zip(cw) {
            if a.is_finite() {
                let d = a - b;
                part += d * d;
                present += 1;
            }
        }
        acc += part;
    }
    match present {
        0 => None,
        p if p == v.len() => Some(acc),
        p => Some(acc * T::of_usize(v.len()) / T::of_usize(p)),
    }
}

/// Masked Euclidean distance between an input and a codebook vector.
pub fn masked_distance<T: Scalar>(v: &[T], w: &[T]) -> Option<T> {
    masked_sq_dist(v, w).map(|d| d.sqrt())
}

/// `(unit, squared distance)` of the best match; ties go to the smallest
/// row-major index. `hint` seeds the search bound and never changes the
/// result.
fn bmu_sq<T: Scalar>(grid: &SomGrid<T>, v: &[T], hint: Option<usize>) -> Option<(usize, T)> {
    let complete = v.iter().all(|x| x.is_finite());
    if !complete {
        let mut best: Option<(usize, T)> = None;
        for u in 0..grid.n_units() {
            let d = masked_sq_dist(v, grid.unit(u))?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((u, d));
            }
        }
        return best;
    }
    let start = hint.filter(|&h| h < grid.n_units()).unwrap_or(0);
    let mut best_u = start;
    let mut best_d = sq_dist_bounded(v, grid.unit(start), T::infinity());
    for u in 0..grid.n_units() {
        if u == start {
            continue;
        }
        let d = sq_dist_bounded(v, grid.unit(u), best_d);
        if d < best_d || (d == best_d && u < best_u) {
            best_u = u;
            best_d = d;
        }
    }
    Some((best_u, best_d))
}

/// Best-matching unit and its (masked) distance.
pub fn bmu<T: Scalar>(grid: &SomGrid<T>, v: &[T]) -> Result<(usize, T)> {
    if v.len() != grid.dim {
        return Err(Error::invalid(format!(
            "vector of length {} for a {}-dim map",
            v.len(),
            grid.dim
        )));
    }
    bmu_sq(grid, v, None)
        .map(|(u, d)| (u, d.sqrt()))
        .ok_or_else(|| Error::invalid("cannot match an all-missing vector"))
}

fn check_data<T: Scalar>(grid: &SomGrid<T>, data: &FeatureMatrix<T>) -> Result<()> {
    if data.cols() != grid.dim {
        return Err(Error::invalid(format!(
            "data has {} columns, map has dim {}",
            data.cols(),
            grid.dim
        )));
    }
    if let Some(r) = (0..data.rows()).find(|&r| data.row(r).iter().all(|v| v.is_missing())) {
        return Err(Error::invalid(format!("row {r} has no present values")));
    }
    Ok(())
}

fn assign_all<T: Scalar>(grid: &SomGrid<T>, data: &FeatureMatrix<T>, hints: Option<&[usize]>) -> Vec<(usize, T)> {
    (0..data.rows())
        .into_par_iter()
        .map(|r| {
            let hint = hints.map(|h| h[r]);
            bmu_sq(grid, data.row(r), hint).expect("rows validated to have present values")
        })
        .collect()
}

/// BMU and distance for every data row.
pub fn bmu_all<T: Scalar>(grid: &SomGrid<T>, data: &FeatureMatrix<T>) -> Result<Vec<(usize, T)>> {
    check_data(grid, data)?;
    Ok(assign_all(grid, data, None)
        .into_iter()
        .map(|(u, d)| (u, d.sqrt()))
        .collect())
}

fn mean_distance<T: Scalar>(assign: &[(usize, T)]) -> T {
    if assign.is_empty() {
        return T::zero();
    }
    assign.iter().fold(T::zero(), |acc, &(_, d)| acc + d.sqrt()) / T::of_usize(assign.len())
}

/// Mean BMU distance over all rows.
pub fn quantization_error<T: Scalar>(grid: &SomGrid<T>, data: &FeatureMatrix<T>) -> Result<T> {
    check_data(grid, data)?;
    Ok(mean_distance(&assign_all(grid, data, None)))
}

fn column_means<T: Scalar>(data: &FeatureMatrix<T>) -> Vec<T> {
    (0..data.cols())
        .map(|c| {
            let present: Vec<T> = data.column(c).into_iter().filter(|v| v.is_finite()).collect();
            if present.is_empty() {
                T::zero()
            } else {
                present.iter().fold(T::zero(), |a, &b| a + b) / T::of_usize(present.len())
            }
        })
        .collect()
}

fn linspace_unit<T: Scalar>(i: usize, n: usize) -> T {
    if n <= 1 {
        T::zero()
    } else {
        T::of(2.0 * i as f64 / (n - 1) as f64 - 1.0)
    }
}

/// Initial codebook. `RandomSample` copies uniformly drawn data rows
/// (missing cells replaced by the column mean); `PcaPlane` spans
/// `mean ± 2·sqrt(λ)·axis` of the first two principal axes along lattice
/// rows and columns respectively.
pub fn init_codebook<T: Scalar>(
    data: &FeatureMatrix<T>,
    rows: usize,
    cols: usize,
    cfg: &TrainConfig<T>,
) -> Result<SomGrid<T>> {
    if data.rows() == 0 {
        return Err(Error::invalid("cannot initialize a map from empty data"));
    }
    let dim = data.cols();
    let means = column_means(data);
    let n_units = rows * cols;
    let mut codebook = Vec::with_capacity(n_units * dim);
    match cfg.init {
        InitMethod::RandomSample => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for _ in 0..n_units {
                let r = rng.random_range(0..data.rows());
                codebook.extend(
                    data.row(r)
                        .iter()
                        .zip(&means)
                        .map(|(&v, &m)| if v.is_finite() { v } else { m }),
                );
            }
        }
        InitMethod::PcaPlane => {
            let filled = FeatureMatrix::new(
                data.rows(),
                dim,
                data.values()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if v.is_finite() { v } else { means[i % dim] })
                    .collect(),
                data.col_names().to_vec(),
                data.provenance().to_vec(),
            )?;
            let axes: Vec<(Vec<T>, T)> = if data.rows() >= 2 {
                let p = pca_fit(&filled, 2)?;
                p.components
                    .iter()
                    .zip(&p.eigenvalues)
                    .map(|(c, &l)| (c.clone(), T::of(2.0) * l.max(T::zero()).sqrt()))
                    .collect()
            } else {
                Vec::new()
            };
            let axis = |k: usize| axes.get(k).cloned().unwrap_or((vec![T::zero(); dim], T::zero()));
            let (e1, s1) = axis(0);
            let (e2, s2) = axis(1);
            for i in 0..rows {
                let a = linspace_unit::<T>(i, rows) * s1;
                for j in 0..cols {
                    let b = linspace_unit::<T>(j, cols) * s2;
                    codebook.extend((0..dim).map(|d| means[d] + a * e1[d] + b * e2[d]));
                }
            }
        }
    }
    let mut grid = SomGrid::new(rows, cols, dim, codebook)?;
    grid.seed = cfg.seed;
    Ok(grid)
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// 1-D Gaussian weights `exp(-(i-k)^2 / (2 r^2))` for an axis of length `n`.
fn axis_kernel<T: Scalar>(n: usize, radius: T) -> Vec<T> {
    let two_r2 = T::of(2.0) * radius * radius;
    let mut k = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let d = T::of_usize(i.abs_diff(j));
            k[i * n + j] = (-(d * d) / two_r2).exp();
        }
    }
    k
}

/// Separable neighbourhood smoothing of per-unit accumulators
/// (`rows x cols x dim`), in a fixed summation order.
fn smooth<T: Scalar>(acc: &[T], rows: usize, cols: usize, dim: usize, kr: &[T], kc: &[T]) -> Vec<T> {
    let mut tmp = vec![T::zero(); acc.len()];
    for i in 0..rows {
        for k in 0..rows {
            let w = kr[i * rows + k];
            if w == T::zero() {
                continue;
            }
            let src = &acc[k * cols * dim..(k + 1) * cols * dim];
            let dst = &mut tmp[i * cols * dim..(i + 1) * cols * dim];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    let mut out = vec![T::zero(); acc.len()];
    for i in 0..rows {
        for j in 0..cols {
            let dst_off = (i * cols + j) * dim;
            for l in 0..cols {
                let w = kc[j * cols + l];
                if w == T::zero() {
                    continue;
                }
                let src_off = (i * cols + l) * dim;
                for d in 0..dim {
                    out[dst_off + d] += w * tmp[src_off + d];
                }
            }
        }
    }
    out
}

/// Result of [`batch_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trained<T> {
    pub grid: SomGrid<T>,
    /// Quantization error of the initial codebook followed by the error
    /// after each epoch (`epochs + 1` values).
    pub quantization_errors: Vec<T>,
}

/// Batch SOM. Each epoch assigns every row to its BMU and replaces each
/// unit by the neighbourhood-weighted mean of the data, per dimension and
/// over present values only. Units with no weight keep their vector.
///
/// Rows are visited in a canonical (lexicographic) order, so the result is
/// bit-identical for any permutation of the input rows.
pub fn batch_train<T: Scalar>(grid: &SomGrid<T>, data: &FeatureMatrix<T>, cfg: &TrainConfig<T>) -> Result<Trained<T>> {
    cfg.validate()?;
    if data.rows() == 0 {
        return Err(Error::invalid("cannot train on empty data"));
    }
    check_data(grid, data)?;
    let (rows, cols, dim) = (grid.rows, grid.cols, grid.dim);

    let mut order: Vec<usize> = (0..data.rows()).collect();
    order.sort_by(|&a, &b| lex_cmp(data.row(a), data.row(b)));
    let data = data.select_rows(&order);

    let mut current = grid.clone();
    let mut assign = assign_all(&current, &data, None);
    let mut errors = vec![mean_distance(&assign)];

    for epoch in 0..cfg.epochs {
        let mut sums = vec![T::zero(); rows * cols * dim];
        let mut counts = vec![T::zero(); rows * cols * dim];
        for (r, &(u, _)) in assign.iter().enumerate() {
            let off = u * dim;
            for (d, &v) in data.row(r).iter().enumerate() {
                if v.is_finite() {
                    sums[off + d] += v;
                    counts[off + d] += T::one();
                }
            }
        }
        let radius = cfg.radius(epoch);
        let kr = axis_kernel(rows, radius);
        let kc = axis_kernel(cols, radius);
        let num = smooth(&sums, rows, cols, dim, &kr, &kc);
        let den = smooth(&counts, rows, cols, dim, &kr, &kc);
        for (i, w) in current.codebook.iter_mut().enumerate() {
            if den[i] > T::zero() {
                let v = num[i] / den[i];
                if v.is_finite() {
                    *w = v;
                }
            }
        }
        current.trained_epochs += 1;

        let hints: Vec<usize> = assign.iter().map(|&(u, _)| u).collect();
        assign = assign_all(&current, &data, Some(&hints));
        errors.push(mean_distance(&assign));
    }
    current.seed = cfg.seed;
    Ok(Trained {
        grid: current,
        quantization_errors: errors,
    })
}

/// Per unit, the mean distance to its 4-connected lattice neighbours.
pub fn umatrix<T: Scalar>(grid: &SomGrid<T>) -> Grid<T> {
    let (rows, cols) = (grid.rows, grid.cols);
    let mut out = Grid::filled(rows, cols, T::zero());
    for r in 0..rows {
        for c in 0..cols {
            let u = r * cols + c;
            let mut total = T::zero();
            let mut n = 0usize;
            let neighbours = [
                (r > 0).then(|| u - cols),
                (r + 1 < rows).then(|| u + cols),
                (c > 0).then(|| u - 1),
                (c + 1 < cols).then(|| u + 1),
            ];
            for v in neighbours.into_iter().flatten() {
                total += sq_dist_bounded(grid.unit(u), grid.unit(v), T::infinity()).sqrt();
                n += 1;
            }
            if n > 0 {
                out.set(r, c, total / T::of_usize(n));
            }
        }
    }
    out
}

/// Training labels projected onto the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledComponentPlane<T> {
    pub hits: Grid<usize>,
    /// Mean label of the rows mapped to each unit; `None` without hits.
    pub values: Grid<Option<T>>,
}

pub fn project_labels<T: Scalar>(
    grid: &SomGrid<T>,
    data: &FeatureMatrix<T>,
    labels: &[u8],
) -> Result<LabeledComponentPlane<T>> {
    if labels.len() != data.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} rows",
            labels.len(),
            data.rows()
        )));
    }
    let assign = bmu_all(grid, data)?;
    let mut hits = vec![0usize; grid.n_units()];
    let mut good = vec![0usize; grid.n_units()];
    for (&(u, _), &l) in assign.iter().zip(labels) {
        hits[u] += 1;
        good[u] += usize::from(l == 1);
    }
    let values = hits
        .iter()
        .zip(&good)
        .map(|(&h, &g)| (h > 0).then(|| T::of_usize(g) / T::of_usize(h)))
        .collect();
    Ok(LabeledComponentPlane {
        hits: Grid::from_vec(grid.rows, grid.cols, hits)?,
        values: Grid::from_vec(grid.rows, grid.cols, values)?,
    })
}
