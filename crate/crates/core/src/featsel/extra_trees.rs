//! Impurity-based feature importance from an ensemble of extremely
//! randomized classification trees.
//!
//! Every random choice at a node (which features are candidates, where
//! each candidate's threshold falls) is derived from the tree seed, the
//! node's path and the feature's *name*, never its column position. The
//! scores are therefore exactly permutation-equivariant in the columns.

use rayon::prelude::*;

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::{derive_seed, mix64, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtraTreesConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `floor(sqrt(cols))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl ExtraTreesConfig {
    pub fn new(n_trees: usize, seed: u64) -> Self {
        ExtraTreesConfig {
            n_trees,
            max_features: None,
            min_samples_split: 2,
            seed,
        }
    }
}

impl Default for ExtraTreesConfig {
    fn default() -> Self {
        Self::new(100, 0)
    }
}

/// Non-negative scores summing to 1 and the column order they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRanking {
    pub scores: Vec<f64>,
    /// Column indices by descending score; ties by index.
    pub order: Vec<usize>,
}

impl ImportanceRanking {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        ImportanceRanking { scores, order }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Sum in a column-order-independent order.
fn keyed_sum(v: &[f64], key_order: &[usize]) -> f64 {
    key_order.iter().map(|&c| v[c]).sum()
}

struct TreeInput<'a, T> {
    m: &'a FeatureMatrix<T>,
    labels: &'a [u8],
    name_keys: &'a [u64],
    max_features: usize,
    min_samples_split: usize,
}

/// Unnormalized impurity decrease per feature for one tree.
fn grow_tree<T: Scalar>(input: &TreeInput<'_, T>, tree_seed: u64) -> Vec<f64> {
    let cols = input.m.cols();
    let mut importance = vec![0.0; cols];
    let mut stack: Vec<(Vec<usize>, u64)> = vec![((0..input.m.rows()).collect(), 1)];
    let mut candidates: Vec<(u64, usize, T, T)> = Vec::with_capacity(cols);

    while let Some((rows, node_id)) = stack.pop() {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| input.labels[r] == 1).count();
        if n < input.min_samples_split || pos == 0 || pos == n {
            continue;
        }
        let node_seed = mix64(tree_seed ^ node_id);

        candidates.clear();
        for c in 0..cols {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for &r in &rows {
                let v = input.m.get(r, c);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo < hi {
                candidates.push((mix64(node_seed ^ input.name_keys[c]), c, lo, hi));
            }
        }
        if candidates.is_empty() {
            continue;
        }
        candidates.sort_by_key(|&(key, _, _, _)| key);
        candidates.truncate(input.max_features);

        let parent = n as f64 * gini(pos, n);
        let mut best: Option<(f64, usize, T)> = None;
        for &(key, c, lo, hi) in &candidates {
            let u = T::of(unit_interval(mix64(key ^ 0x005E_ED0F_7E57)));
            let thr = lo + (hi - lo) * u;
            let (mut nl, mut pl) = (0usize, 0usize);
            for &r in &rows {
                if input.m.get(r, c) <= thr {
                    nl += 1;
                    pl += usize::from(input.labels[r] == 1);
                }
            }
            let (nr, pr) = (n - nl, pos - pl);
            let gain = parent - nl as f64 * gini(pl, nl) - nr as f64 * gini(pr, nr);
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, c, thr));
            }
        }
        let Some((gain, c, thr)) = best else { continue };
        importance[c] += gain.max(0.0);
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| input.m.get(r, c) <= thr);
        if left.is_empty() || right.is_empty() {
            continue;
        }
        stack.push((right, mix64(node_id.wrapping_mul(2).wrapping_add(1))));
        stack.push((left, mix64(node_id.wrapping_mul(2))));
    }
    importance
}

/// Extremely randomized trees on the full sample (no bootstrap).
/// Per-tree importances are normalized, averaged in tree order, and
/// normalized again. Column names must be unique.
pub fn ext_importance<T: Scalar>(
    m: &FeatureMatrix<T>,
    labels: &[u8],
    cfg: &ExtraTreesConfig,
) -> Result<ImportanceRanking> {
    if labels.len() != m.rows() {
        return Err(Error::invalid(format!("{} labels for {} rows", labels.len(), m.rows())));
    }
    if cfg.n_trees == 0 {
        return Err(Error::invalid("n_trees must be >= 1"));
    }
    if m.cols() == 0 {
        return Err(Error::invalid("no features to rank"));
    }
    if !m.is_finite() {
        return Err(Error::invalid("extra trees need a finite (cleaned) matrix"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::invalid("extra trees need both classes present"));
    }
    let name_keys: Vec<u64> = m.col_names().iter().map(|n| mix64(fnv1a(n))).collect();
    let mut uniq = name_keys.clone();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() != name_keys.len() {
        return Err(Error::invalid("column names must be unique"));
    }
    let default_features = ((m.cols() as f64).sqrt().floor() as usize).max(1);
    let input = TreeInput {
        m,
        labels,
        name_keys: &name_keys,
        max_features: cfg.max_features.unwrap_or(default_features).clamp(1, m.cols()),
        min_samples_split: cfg.min_samples_split.max(2),
    };
    let per_tree: Vec<Vec<f64>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(&input, derive_seed(cfg.seed, t as u64)))
        .collect();

    let mut key_order: Vec<usize> = (0..m.cols()).collect();
    key_order.sort_by_key(|&c| name_keys[c]);
    let mut scores = vec![0.0; m.cols()];
    for imp in &per_tree {
        let total = keyed_sum(imp, &key_order);
        if total > 0.0 {
            for (s, v) in scores.iter_mut().zip(imp) {
                *s += v / total;
            }
        }
    }
    let total = keyed_sum(&scores, &key_order);
    if total > 0.0 {
        scores.iter_mut().for_each(|s| *s /= total);
    } else {
        let uniform = 1.0 / m.cols() as f64;
        scores.iter_mut().for_each(|s| *s = uniform);
    }
    Ok(ImportanceRanking::from_scores(scores))
}
