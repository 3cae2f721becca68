//! Normality testing and the one-tailed two-sample tests used for labeling.

use statrs::function::beta::beta_reg;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::scalar::{mean, sample_variance, Scalar};

/// Below this length the Anderson–Darling check is not attempted.
pub const MIN_NORMALITY_SAMPLE: usize = 8;

/// 5% critical value of the adjusted A² statistic (estimated mean and variance).
pub const AD_CRITICAL_5PCT: f64 = 0.752;

/// Largest combined size for which the exact Mann–Whitney null is used.
pub const MW_EXACT_MAX_N: usize = 16;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Upper tail of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normality {
    Normal,
    NonNormal,
    TooSmall,
}

/// Anderson–Darling A² with the small-sample adjustment
/// `A²(1 + 0.75/n + 2.25/n²)`. `None` when fewer than two values or the
/// sample has zero variance.
pub fn anderson_darling<T: Scalar>(sample: &[T]) -> Option<f64> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    let mut xs: Vec<f64> = sample.iter().map(|x| x.as_f64()).collect();
    xs.sort_by(f64::total_cmp);
    let m = mean(&xs);
    let sd = sample_variance(&xs).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let zi = (xs[i] - m) / sd;
        let zj = (xs[n - 1 - i] - m) / sd;
        // ln Φ(z_i) + ln(1 − Φ(z_{n+1−i})), tails evaluated directly
        let a = normal_cdf(zi).max(f64::MIN_POSITIVE).ln();
        let b = normal_sf(zj).max(f64::MIN_POSITIVE).ln();
        s += (2.0 * (i as f64) + 1.0) * (a + b);
    }
    let a2 = -nf - s / nf;
    Some(a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf)))
}

pub fn normality_check<T: Scalar>(sample: &[T]) -> Normality {
    if sample.len() < MIN_NORMALITY_SAMPLE {
        return Normality::TooSmall;
    }
    match anderson_darling(sample) {
        Some(a2) if a2 <= AD_CRITICAL_5PCT => Normality::Normal,
        _ => Normality::NonNormal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// One-tailed p for the alternative `mean(x) > mean(y)`.
    pub p_value: f64,
}

/// Welch's unequal-variance t-test, one-tailed (`mean(x) > mean(y)`).
pub fn welch_one_tailed<T: Scalar>(x: &[T], y: &[T]) -> Result<WelchResult> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::invalid(format!(
            "welch test needs at least 2 values per sample (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let to64 = |s: &[T]| s.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
    let (x, y) = (to64(x), to64(y));
    let (mx, my) = (mean(&x), mean(&y));
    let (vx, vy) = (sample_variance(&x), sample_variance(&y));
    if !(mx.is_finite() && my.is_finite() && vx.is_finite() && vy.is_finite()) {
        return Err(Error::invalid("welch test on non-finite sample"));
    }
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let a = vx / nx;
    let b = vy / ny;
    let se2 = a + b;
    if se2 == 0.0 {
        let (t, p) = if mx > my {
            (f64::INFINITY, 0.0)
        } else if mx < my {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        return Ok(WelchResult {
            t,
            df: nx + ny - 2.0,
            p_value: p,
        });
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (a * a / (nx - 1.0) + b * b / (ny - 1.0));
    Ok(WelchResult {
        t,
        df,
        p_value: student_t_sf(t, df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyResult {
    /// U statistic of `x` (number of pairs with x > y, ties counted ½).
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of `values`, plus the tie groups' sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of rank arrangements of `m` x-values and `n` y-values giving each
/// U in `0..=m*n`.
fn u_counts(m: usize, n: usize) -> Vec<u128> {
    // prev[j][u] = count for (i-1, j); rolled over i.
    let max_u = m * n;
    let mut table: Vec<Vec<u128>> = vec![vec![0; max_u + 1]; n + 1];
    for row in table.iter_mut() {
        row[0] = 1; // i = 0: only U = 0
    }
    for i in 1..=m {
        let mut next: Vec<Vec<u128>> = vec![vec![0; max_u + 1]; n + 1];
        next[0][0] = 1;
        for j in 1..=n {
            for u in 0..=i * j {
                // largest element is an x (beats all j y's) or a y
                let from_x = if u >= j { table[j][u - j] } else { 0 };
                let from_y = next[j - 1][u];
                next[j][u] = from_x + from_y;
            }
        }
        table = next;
    }
    table.swap_remove(n)
}

/// Mann–Whitney U, one-tailed (x stochastically greater than y).
///
/// Exact null distribution when `len(x)+len(y) <= 16` and there are no
/// ties; otherwise the normal approximation with continuity and tie
/// corrections.
pub fn mann_whitney_one_tailed<T: Scalar>(x: &[T], y: &[T]) -> Result<MannWhitneyResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("mann-whitney test needs non-empty samples"));
    }
    let (nx, ny) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).map(|v| v.as_f64()).collect();
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("mann-whitney test on NaN sample"));
    }
    let (ranks, ties) = midranks(&pooled);
    let rx: f64 = ranks[..nx].iter().sum();
    let u = rx - (nx * (nx + 1)) as f64 / 2.0;
    let n = nx + ny;

    if ties.is_empty() && n <= MW_EXACT_MAX_N {
        let counts = u_counts(nx, ny);
        let total: u128 = counts.iter().sum();
        let u_obs = u.round() as usize;
        let upper: u128 = counts[u_obs..].iter().sum();
        return Ok(MannWhitneyResult {
            u,
            p_value: upper as f64 / total as f64,
            exact: true,
        });
    }

    let (nxf, nyf, nf) = (nx as f64, ny as f64, n as f64);
    let mu = nxf * nyf / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
    let var = nxf * nyf / 12.0 * ((nf + 1.0) - tie_term);
    let p = if var <= 0.0 {
        0.5
    } else {
        let diff = u - mu;
        let z = (diff - 0.5 * diff.signum()) / var.sqrt();
        normal_sf(z)
    };
    Ok(MannWhitneyResult {
        u,
        p_value: p,
        exact: false,
    })
}

/// QQ pairs `(theoretical, sample)`: standardized sorted sample against
/// normal quantiles at `(i − ½)/n`.
pub fn qq_points<T: Scalar>(sample: &[T]) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = sample.iter().map(|v| v.as_f64()).filter(|v| v.is_finite()).collect();
    let n = xs.len();
    if n < 2 {
        return Vec::new();
    }
    xs.sort_by(f64::total_cmp);
    let m = mean(&xs);
    let sd = sample_variance(&xs).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = (i as f64 + 0.5) / n as f64;
            (normal_quantile(p), (x - m) / sd)
        })
        .collect()
}
