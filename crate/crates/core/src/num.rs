//! Scalar abstraction: the field computations are generic over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};

/// Floating-point scalar for all field and energy computations.
///
/// Tolerances in this crate are stated for `f64`; they are converted with
/// [`Scalar::cast`], so `f32` instantiations inherit the same nominal bounds
/// (useful for smoke tests, not for the acceptance-grade experiments).
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`, used for tolerance constants.
    fn cast(x: f64) -> Self;

    /// Lossy conversion to `f64`, used for reporting.
    fn to_f64_lossy(self) -> f64;

    /// One draw from the standard normal distribution.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from the uniform distribution on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn cast(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardUniform.sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Euclidean norm of a slice.
pub fn norm2<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Squared Euclidean distance between two slices of equal length.
pub fn dist2_sq<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
}

/// Euclidean distance between two slices of equal length.
pub fn dist2<T: Scalar>(a: &[T], b: &[T]) -> T {
    dist2_sq(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn casts_round_trip_for_small_integers() {
        assert_eq!(<f64 as Scalar>::cast(3.0), 3.0);
        assert_eq!(<f32 as Scalar>::cast(0.5), 0.5f32);
        assert_eq!(2.5f64.to_f64_lossy(), 2.5);
    }

    #[test]
    fn norms() {
        assert_eq!(norm2(&[3.0f64, 4.0]), 5.0);
        assert_eq!(dist2(&[1.0f64, 1.0], &[4.0, 5.0]), 5.0);
    }
}
