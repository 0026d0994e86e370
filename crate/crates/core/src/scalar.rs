//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Graph topology is integer-indexed and scalar-free; weights, path masses,
//! iterates and matrices are generic over [`Scalar`], implemented for `f32`
//! and `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable by the routing engine.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Default + Debug + Display + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Tolerance used for flow-polytope feasibility checks.
    fn feasibility_tol() -> Self;

    /// Converts an `f64` literal. Values outside the type's range saturate.
    fn of(v: f64) -> Self;

    /// Uniform draw on `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard normal draw.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn feasibility_tol() -> Self {
        1e-9
    }

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f32 {
    fn feasibility_tol() -> Self {
        1e-4
    }

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Inner product of two equally long slices.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
