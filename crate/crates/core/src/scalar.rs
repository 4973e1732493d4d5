use std::fmt::Debug;

/// Floating-point element type for embeddings and similarity scans.
pub trait Scalar: num_traits::Float + num_traits::FromPrimitive + Debug + Default + Send + Sync + 'static {}

impl<T> Scalar for T where T: num_traits::Float + num_traits::FromPrimitive + Debug + Default + Send + Sync + 'static {}

/// Converts an `f64` literal into `T`. Every `Scalar` can represent an `f64` approximately.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}
