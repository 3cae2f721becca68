//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used by the change-point, statistics, feature-selection,
/// SOM and FWC code. Implemented for `f32` and `f64`.
///
/// Missing values inside feature matrices are represented as `NaN`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64` (rounds for `f32`).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// `true` for `NaN` and infinities.
    fn is_missing(self) -> bool {
        !self.is_finite()
    }

    fn missing() -> Self {
        Self::nan()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sum in index order; keeps reductions bit-reproducible.
pub(crate) fn ordered_sum<T: Scalar>(xs: impl IntoIterator<Item = T>) -> T {
    xs.into_iter().fold(T::zero(), |acc, x| acc + x)
}

pub(crate) fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    ordered_sum(xs.iter().copied()) / T::of_usize(xs.len())
}

/// Sample variance (denominator `n - 1`); `NaN` for fewer than two values.
pub(crate) fn sample_variance<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::nan();
    }
    let m = mean(xs);
    ordered_sum(xs.iter().map(|&x| (x - m) * (x - m))) / T::of_usize(xs.len() - 1)
}

/// Median of the finite values; `None` if there are none.
pub(crate) fn median<T: Scalar>(xs: &[T]) -> Option<T> {
    let mut v: Vec<T> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::of(2.0)
    })
}

/// SplitMix64 finalizer. Used to derive independent sub-seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for stream `stream` of `root`.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    mix64(root ^ mix64(stream))
}
