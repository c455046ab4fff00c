//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the verifier can run on.
///
/// Everything geometric (region membership, facet detection, LP pivoting)
/// works with explicit tolerances, so the trait carries the defaults that
/// make sense for each precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Default margin for "strictly interior" tests.
    fn default_eps() -> Self;

    /// Smallest magnitude the simplex accepts as a pivot element.
    fn pivot_tol() -> Self;

    /// Tolerance used to compare reduced costs and ratios inside the simplex.
    fn lp_tol() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn default_eps() -> Self {
        1e-7
    }
    fn pivot_tol() -> Self {
        1e-11
    }
    fn lp_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn default_eps() -> Self {
        1e-4
    }
    fn pivot_tol() -> Self {
        1e-6
    }
    fn lp_tol() -> Self {
        1e-5
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
