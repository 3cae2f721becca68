//! Two-sided CUSUM change-point detection, grid tuning toward a
//! hypersensitive setting, and slope-aware consolidation of the resulting
//! segments toward a target interval length.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::{mean, sample_variance, Scalar};

/// Consolidation tolerance as a fraction of the target length.
pub const TOLERANCE_BAND: f64 = 0.2;

/// Undersized leftovers may be absorbed up to `target * (1 + 2 * band)`.
const REMNANT_CAP: f64 = 1.0 + 2.0 * TOLERANCE_BAND;

/// Threshold and drift, both in standard deviations of the differenced series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumParams<T> {
    pub threshold: T,
    pub drift: T,
}

impl<T: Scalar> CusumParams<T> {
    pub fn new(threshold: T, drift: T) -> Result<Self> {
        if !(threshold > T::zero() && threshold.is_finite()) {
            return Err(Error::invalid(format!("cusum threshold must be > 0, got {threshold}")));
        }
        if !(drift >= T::zero() && drift.is_finite()) {
            return Err(Error::invalid(format!("cusum drift must be >= 0, got {drift}")));
        }
        Ok(CusumParams { threshold, drift })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointSet<T> {
    /// Strictly increasing series indices.
    pub indices: Vec<usize>,
    pub params: CusumParams<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetSize {
    Small,
    Medium,
    Large,
}

impl TargetSize {
    pub const ALL: [TargetSize; 3] = [TargetSize::Small, TargetSize::Medium, TargetSize::Large];

    pub fn weeks(self) -> usize {
        match self {
            TargetSize::Small => 25,
            TargetSize::Medium => 52,
            TargetSize::Large => 156,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetSize::Small => "small",
            TargetSize::Medium => "medium",
            TargetSize::Large => "large",
        }
    }
}

impl fmt::Display for TargetSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TargetSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" | "25" => Ok(TargetSize::Small),
            "medium" | "52" => Ok(TargetSize::Medium),
            "large" | "156" => Ok(TargetSize::Large),
            other => Err(Error::invalid(format!("unknown target size {other:?}"))),
        }
    }
}

/// Contiguous `(start, end)` index pairs, `end > start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    pub intervals: Vec<(usize, usize)>,
    pub target_len: usize,
}

impl IntervalSet {
    fn from_boundaries(bounds: &[usize], target_len: usize) -> Self {
        IntervalSet {
            intervals: bounds.windows(2).map(|w| (w[0], w[1])).collect(),
            target_len,
        }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Boundary indices: every start plus the final end.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.intervals.iter().map(|i| i.0).collect();
        if let Some(last) = self.intervals.last() {
            b.push(last.1);
        }
        b
    }

    pub fn mean_length(&self) -> f64 {
        if self.intervals.is_empty() {
            return 0.0;
        }
        self.intervals.iter().map(|(a, b)| (b - a) as f64).sum::<f64>() / self.intervals.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CusumGrid<T> {
    pub thresholds: Vec<T>,
    pub drifts: Vec<T>,
}

impl<T: Scalar> Default for CusumGrid<T> {
    fn default() -> Self {
        CusumGrid {
            thresholds: [1.0, 2.0, 3.0, 4.0, 5.0].map(T::of).to_vec(),
            drifts: [0.0, 0.25, 0.5, 1.0].map(T::of).to_vec(),
        }
    }
}

/// Standardized first differences; `None` when the differences have zero
/// (or undefined) variance.
fn standardized_increments<T: Scalar>(series: &[T]) -> Option<Vec<T>> {
    let d: Vec<T> = series.windows(2).map(|w| w[1] - w[0]).collect();
    if d.len() < 2 {
        return None;
    }
    let m = mean(&d);
    let sd = sample_variance(&d).sqrt();
    if !(sd > T::zero()) || !sd.is_finite() {
        return None;
    }
    Some(d.into_iter().map(|x| (x - m) / sd).collect())
}

/// Two-sided CUSUM on the standardized first differences. An alarm at
/// increment `i` (between points `i-1` and `i`) reports index `i`; both
/// sums restart from zero after every alarm.
pub fn cusum_detect<T: Scalar>(series: &[T], params: &CusumParams<T>) -> Result<ChangePointSet<T>> {
    if series.len() < 2 {
        return Err(Error::invalid(format!(
            "cusum needs a series of length >= 2, got {}",
            series.len()
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("cusum series contains non-finite values"));
    }
    let mut indices = Vec::new();
    if let Some(z) = standardized_increments(series) {
        let (mut pos, mut neg) = (T::zero(), T::zero());
        for (i, &zi) in z.iter().enumerate() {
            pos = (pos + zi - params.drift).max(T::zero());
            neg = (neg - zi - params.drift).max(T::zero());
            if pos > params.threshold || neg > params.threshold {
                indices.push(i + 1);
                pos = T::zero();
                neg = T::zero();
            }
        }
    }
    Ok(ChangePointSet {
        indices,
        params: *params,
    })
}

/// Exhaustive search for the most sensitive grid point: the largest alarm
/// count that still reaches `min_segments`. Ties go to the smaller
/// threshold, then the smaller drift.
pub fn tune_hypersensitive<T: Scalar>(
    series: &[T],
    grid: &CusumGrid<T>,
    min_segments: usize,
) -> Result<CusumParams<T>> {
    if grid.thresholds.is_empty() || grid.drifts.is_empty() {
        return Err(Error::invalid("cusum grid must be non-empty"));
    }
    if min_segments < 2 {
        return Err(Error::invalid("min_segments must be >= 2"));
    }
    let mut points = Vec::with_capacity(grid.thresholds.len() * grid.drifts.len());
    for &h in &grid.thresholds {
        for &k in &grid.drifts {
            points.push(CusumParams::new(h, k)?);
        }
    }
    points.sort_by(|a, b| {
        a.threshold
            .partial_cmp(&b.threshold)
            .unwrap()
            .then(a.drift.partial_cmp(&b.drift).unwrap())
    });

    let mut best: Option<(usize, CusumParams<T>)> = None;
    let mut best_any = 0;
    for p in points {
        let count = cusum_detect(series, &p)?.indices.len();
        best_any = best_any.max(count);
        if count >= min_segments && best.is_none_or(|(c, _)| count > c) {
            best = Some((count, p));
        }
    }
    best.map(|(_, p)| p).ok_or(Error::Tuning {
        required: min_segments,
        best: best_any,
    })
}

fn slope_sign<T: Scalar>(series: &[T], a: usize, b: usize) -> i8 {
    let d = series[b] - series[a];
    if d > T::zero() {
        1
    } else if d < T::zero() {
        -1
    } else {
        0
    }
}

/// Distance of `series[mid]` from the chord joining the outer endpoints:
/// how pronounced the turning point at `mid` is.
fn prominence<T: Scalar>(series: &[T], a: usize, mid: usize, b: usize) -> T {
    let frac = T::of_usize(mid - a) / T::of_usize(b - a);
    let chord = series[a] + (series[b] - series[a]) * frac;
    (series[mid] - chord).abs()
}

fn consolidate_boundaries<T: Scalar>(series: &[T], bounds: &[usize], target: usize) -> Vec<usize> {
    let t = target as f64;
    let upper = (t * (1.0 + TOLERANCE_BAND)).floor() as usize;
    let lower = t * (1.0 - TOLERANCE_BAND);
    let remnant_cap = (t * REMNANT_CAP).floor() as usize;

    // Greedy left-to-right: merge neighbours that continue the same
    // direction while the merged length stays within the band.
    let mut out: Vec<usize> = Vec::with_capacity(bounds.len());
    for &e in bounds {
        if out.len() >= 2 {
            let start = out[out.len() - 2];
            let mid = out[out.len() - 1];
            if e - start <= upper && slope_sign(series, start, mid) == slope_sign(series, mid, e) {
                *out.last_mut().unwrap() = e;
                continue;
            }
        }
        out.push(e);
    }

    // Absorb intervals still short of the band into a neighbour, removing
    // the least pronounced turning point first.
    loop {
        let mut best: Option<(T, usize)> = None;
        for i in 0..out.len().saturating_sub(2) {
            let (a, m, b) = (out[i], out[i + 1], out[i + 2]);
            let short = ((m - a) as f64) < lower || ((b - m) as f64) < lower;
            if short && b - a <= remnant_cap {
                let cost = prominence(series, a, m, b);
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, i + 1));
                }
            }
        }
        match best {
            Some((_, idx)) => {
                out.remove(idx);
            }
            None => break,
        }
    }
    out
}

/// Merges adjacent CUSUM intervals toward `target`. Intervals are only
/// ever merged, never split, so the covered span is unchanged.
///
/// First pass: greedy merge of neighbours with the same slope sign
/// (`sign(series[end] − series[start])`) while the result stays within
/// `target * 1.2`. Second pass: intervals shorter than `target * 0.8` are
/// merged across the least prominent turning point, provided the result
/// stays within `target * 1.4`.
pub fn consolidate<T: Scalar>(series: &[T], cps: &ChangePointSet<T>, target: TargetSize) -> Result<IntervalSet> {
    consolidate_to_length(series, &cps.indices, target.weeks())
}

pub(crate) fn consolidate_to_length<T: Scalar>(series: &[T], indices: &[usize], target: usize) -> Result<IntervalSet> {
    if indices.len() < 2 {
        return Err(Error::invalid("consolidation needs at least 2 change points"));
    }
    if indices.windows(2).any(|w| w[1] <= w[0]) || *indices.last().unwrap() >= series.len() {
        return Err(Error::invalid(
            "change points must be strictly increasing and in bounds",
        ));
    }
    let bounds = consolidate_boundaries(series, indices, target);
    Ok(IntervalSet::from_boundaries(&bounds, target))
}

/// Default minimum alarm count: enough segments to cover the span at the
/// target length (at least 2).
pub fn default_min_segments(series_len: usize, target: TargetSize) -> usize {
    let span = series_len.saturating_sub(1);
    span.div_ceil(target.weeks()).max(2)
}

/// Tune, detect and consolidate. The series endpoints are added as
/// boundaries so the intervals cover the whole series.
pub fn segment<T: Scalar>(
    series: &[T],
    target: TargetSize,
    grid: &CusumGrid<T>,
    min_segments: Option<usize>,
) -> Result<IntervalSet> {
    let min_segments = min_segments.unwrap_or_else(|| default_min_segments(series.len(), target));
    let params = tune_hypersensitive(series, grid, min_segments)?;
    let cps = cusum_detect(series, &params)?;
    let mut indices = Vec::with_capacity(cps.indices.len() + 2);
    indices.push(0);
    indices.extend(cps.indices.iter().copied().filter(|&i| i > 0 && i < series.len() - 1));
    indices.push(series.len() - 1);
    consolidate_to_length(series, &indices, target.weeks())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn params(h: f64, k: f64) -> CusumParams<f64> {
        CusumParams::new(h, k).unwrap()
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CusumParams::new(0.0, 0.0).is_err());
        assert!(CusumParams::new(1.0, -0.1).is_err());
    }

    #[test]
    fn constant_series_has_no_alarms() {
        let cps = cusum_detect(&[3.0; 50], &params(1.0, 0.0)).unwrap();
        assert!(cps.indices.is_empty());
    }

    #[test]
    fn large_drift_absorbs_alternating_spikes() {
        let s: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 10.0 } else { -10.0 }).collect();
        let cps = cusum_detect(&s, &params(5.0, 3.0)).unwrap();
        assert!(cps.indices.is_empty());
    }

    #[test]
    fn step_is_located() {
        // Level step of +1 at index 100 under N(0, 0.1) noise. A miss occurs
        // when the noise pulls the step's increment below threshold + drift;
        // when the detector fires it must fire once, at the step.
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut detected = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..200)
                .map(|i| if i < 100 { 0.0 } else { 1.0 } + noise.sample(&mut rng))
                .collect();
            let cps = cusum_detect(&s, &params(5.0, 0.5)).unwrap();
            assert!(cps.indices.len() <= 1, "seed {seed}: {:?}", cps.indices);
            if let Some(&i) = cps.indices.first() {
                assert!((100..=105).contains(&i), "seed {seed}: alarm at {i}");
                detected += 1;
            }
        }
        assert!(detected >= 90, "detected {detected}/100");
    }

    #[test]
    fn tuning_picks_most_alarms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let s: Vec<f64> = (0..300).map(|i| (i / 50) as f64 + noise.sample(&mut rng)).collect();
        let grid = CusumGrid {
            thresholds: vec![5.0, 1.0],
            drifts: vec![0.5, 0.0],
        };
        // oracle: brute-force every grid point
        let mut best = (0usize, 0.0, 0.0);
        for &h in &[1.0, 5.0] {
            for &k in &[0.0, 0.5] {
                let n = cusum_detect(&s, &params(h, k)).unwrap().indices.len();
                if n > best.0 {
                    best = (n, h, k);
                }
            }
        }
        let p = tune_hypersensitive(&s, &grid, 2).unwrap();
        assert_eq!((p.threshold, p.drift), (best.1, best.2));
        assert_eq!((p.threshold, p.drift), (1.0, 0.0));
    }

    #[test]
    fn tuning_fails_on_constant_series() {
        let err = tune_hypersensitive(&[1.0; 40], &CusumGrid::default(), 2).unwrap_err();
        assert!(matches!(err, Error::Tuning { required: 2, best: 0 }));
    }

    #[test]
    fn single_point_grid() {
        let s: Vec<f64> = (0..60).map(|i| ((i * 7919) % 13) as f64).collect();
        let grid = CusumGrid {
            thresholds: vec![1.0],
            drifts: vec![0.0],
        };
        assert_eq!(tune_hypersensitive(&s, &grid, 2).unwrap(), params(1.0, 0.0));
    }

    #[test]
    fn intervals_at_target_are_unchanged() {
        let s: Vec<f64> = (0..=260).map(|i| ((i as f64) * 0.05).sin()).collect();
        let idx: Vec<usize> = (0..=5).map(|k| k * 52).collect();
        let cps = ChangePointSet {
            indices: idx.clone(),
            params: params(1.0, 0.0),
        };
        let out = consolidate(&s, &cps, TargetSize::Medium).unwrap();
        assert_eq!(out.boundaries(), idx);
    }

    #[test]
    fn ramp_merges_up_to_band() {
        let s: Vec<f64> = (0..61).map(|i| i as f64).collect();
        let idx: Vec<usize> = (0..=10).map(|k| k * 6).collect();
        let cps = ChangePointSet {
            indices: idx,
            params: params(1.0, 0.0),
        };
        let out = consolidate(&s, &cps, TargetSize::Medium).unwrap();
        assert_eq!(out.intervals, vec![(0, 60)]);
    }

    #[test]
    fn consolidation_needs_two_points() {
        let cps = ChangePointSet {
            indices: vec![3],
            params: params(1.0, 0.0),
        };
        assert!(consolidate(&[0.0; 10], &cps, TargetSize::Small).is_err());
    }

    #[test]
    fn segment_constant_series_errors() {
        let r = segment(&[2.0; 300], TargetSize::Medium, &CusumGrid::default(), None);
        assert!(matches!(r, Err(Error::Tuning { .. })));
    }

    #[test]
    fn smaller_target_gives_more_intervals() {
        let noise = Normal::new(0.0, 0.03).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = 0.0;
            let s: Vec<f64> = (0..520)
                .map(|_| {
                    x += noise.sample(&mut rng);
                    x
                })
                .collect();
            let grid = CusumGrid::default();
            let small = segment(&s, TargetSize::Small, &grid, None).unwrap();
            let medium = segment(&s, TargetSize::Medium, &grid, None).unwrap();
            let large = segment(&s, TargetSize::Large, &grid, None).unwrap();
            assert!(small.len() >= medium.len() && medium.len() >= large.len());
        }
    }

    #[test]
    fn f32_series_supported() {
        let s: Vec<f32> = (0..200)
            .map(|i| if i < 100 { 0.0 } else { 1.0 } + ((i * 37 % 11) as f32) * 0.01)
            .collect();
        let cps = cusum_detect(&s, &CusumParams::new(5.0f32, 0.5).unwrap()).unwrap();
        assert_eq!(cps.indices, vec![100]);
    }

    proptest! {
        #[test]
        fn detect_indices_increasing_in_bounds(
            s in prop::collection::vec(-1e3f64..1e3, 2..200),
            h in 0.1f64..6.0,
            k in 0.0f64..2.0,
        ) {
            let cps = cusum_detect(&s, &params(h, k)).unwrap();
            prop_assert!(cps.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(cps.indices.iter().all(|&i| i >= 1 && i < s.len()));
        }

        #[test]
        fn consolidation_preserves_span(
            s in prop::collection::vec(-10f64..10.0, 30..300),
            cuts in prop::collection::btree_set(0usize..300, 2..60),
            target in prop::sample::select(vec![TargetSize::Small, TargetSize::Medium, TargetSize::Large]),
        ) {
            let idx: Vec<usize> = cuts.into_iter().filter(|&i| i < s.len()).collect();
            prop_assume!(idx.len() >= 2);
            let shortest = idx.windows(2).map(|w| w[1] - w[0]).min().unwrap();
            let cps = ChangePointSet { indices: idx.clone(), params: params(1.0, 0.0) };
            let out = consolidate(&s, &cps, target).unwrap();
            prop_assert_eq!(out.intervals.first().unwrap().0, idx[0]);
            prop_assert_eq!(out.intervals.last().unwrap().1, *idx.last().unwrap());
            prop_assert!(out.intervals.windows(2).all(|w| w[0].1 == w[1].0));
            prop_assert!(out.intervals.iter().all(|(a, b)| b - a >= shortest));
            // merged boundaries are a subset of the input boundaries
            prop_assert!(out.boundaries().iter().all(|b| idx.contains(b)));
        }

        #[test]
        fn segment_is_deterministic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.02).unwrap();
            let mut x = 0.0;
            let s: Vec<f64> = (0..300).map(|_| { x += noise.sample(&mut rng); x }).collect();
            let a = segment(&s, TargetSize::Small, &CusumGrid::default(), None).unwrap();
            let b = segment(&s, TargetSize::Small, &CusumGrid::default(), None).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
