//! Unit-normalized dense vectors and the inner-product similarity shared by
//! retrieval and query-state caching.
//!
//! Every vector is normalized at construction, so the inner product of two
//! embeddings is a cosine similarity in `[-1, 1]` and a fixed reuse threshold
//! means the same thing regardless of which embedder produced the vectors.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Tolerance on the L2 norm accepted when adopting an already-normalized vector.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// A finite, unit-L2-norm vector of fixed dimension.
#[derive(Clone, PartialEq)]
pub struct UnitVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> UnitVector<T> {
    /// Scales `raw` to unit length.
    pub fn normalize(raw: &[T]) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::ZeroVector);
        }
        // Scale by the max magnitude first so the squared sum cannot overflow.
        let scale = raw.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return Err(Error::ZeroVector);
        }
        let norm = raw
            .iter()
            .map(|v| {
                let s = *v / scale;
                s * s
            })
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
            * scale;
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            values: raw.iter().map(|v| *v / norm).collect(),
        })
    }

    /// Adopts `values` as-is after checking it is already unit length.
    ///
    /// Used when decoding persisted vectors so a load/store round trip keeps
    /// every bit.
    pub fn from_unit(values: Vec<T>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ZeroVector);
        }
        let sq = values.iter().fold(T::zero(), |a, v| a + *v * *v);
        let tol: T = lit(UNIT_NORM_TOLERANCE);
        if (sq.sqrt() - T::one()).abs() > tol {
            return Err(Error::ZeroVector);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Inner product with `other`; errors when dimensions differ.
    pub fn dot(&self, other: &Self) -> Result<T> {
        inner_product(self, other)
    }
}

/// `Σ a_i·b_i` over two embeddings of equal dimension.
pub fn inner_product<T: Scalar>(a: &UnitVector<T>, b: &UnitVector<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot_slices(a.values(), b.values()))
}

/// Unchecked dot product over equal-length slices.
#[inline]
pub fn dot_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

impl<T: fmt::Debug> fmt::Debug for UnitVector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.values.iter()).finish()
    }
}

impl<T: Scalar + Serialize> Serialize for UnitVector<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for UnitVector<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<T>::deserialize(d)?;
        UnitVector::from_unit(values)
            .map_err(|_| de::Error::custom("embedding must be finite and unit-normalized"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn normalize_examples() {
        let e = UnitVector::normalize(&[3.0f64, 4.0]).unwrap();
        assert!(close(e.values(), &[0.6, 0.8], 1e-15));
        let e = UnitVector::normalize(&[1.0f64, 0.0]).unwrap();
        assert_eq!(e.values(), &[1.0, 0.0]);
        let e = UnitVector::normalize(&[1.0f64; 4]).unwrap();
        assert_eq!(e.values(), &[0.5; 4]);
    }

    #[test]
    fn normalize_rejects_degenerate_input() {
        assert!(matches!(UnitVector::<f64>::normalize(&[]), Err(Error::ZeroVector)));
        assert!(matches!(UnitVector::normalize(&[0.0f64, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(UnitVector::normalize(&[f64::NAN, 1.0]), Err(Error::ZeroVector)));
        assert!(matches!(UnitVector::normalize(&[f64::INFINITY]), Err(Error::ZeroVector)));
    }

    #[test]
    fn normalize_survives_extreme_magnitudes() {
        let big = UnitVector::normalize(&[1e300f64, 1e300]).unwrap();
        assert!(close(big.values(), &[std::f64::consts::FRAC_1_SQRT_2; 2], 1e-15));
        let tiny = UnitVector::normalize(&[3e-310f64, 4e-310]).unwrap();
        assert!(close(tiny.values(), &[0.6, 0.8], 1e-12));
    }

    #[test]
    fn inner_product_examples() {
        let a = UnitVector::normalize(&[1.0f64, 0.0]).unwrap();
        let b = UnitVector::normalize(&[0.0f64, 1.0]).unwrap();
        assert_eq!(inner_product(&a, &a).unwrap(), 1.0);
        assert_eq!(inner_product(&a, &b).unwrap(), 0.0);
        // 0.6*0.8 + 0.8*0.6 = 0.96
        let c = UnitVector::normalize(&[0.6f64, 0.8]).unwrap();
        let d = UnitVector::normalize(&[0.8f64, 0.6]).unwrap();
        assert!((inner_product(&c, &d).unwrap() - 0.96).abs() < 1e-15);
    }

    #[test]
    fn inner_product_dim_mismatch() {
        let a = UnitVector::normalize(&[1.0f64, 0.0]).unwrap();
        let b = UnitVector::normalize(&[1.0f64, 0.0, 0.0]).unwrap();
        assert!(matches!(
            inner_product(&a, &b),
            Err(Error::DimMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let a = UnitVector::normalize(&[3.0f32, 4.0]).unwrap();
        let b = UnitVector::normalize(&[4.0f32, 3.0]).unwrap();
        assert!((inner_product(&a, &b).unwrap() - 0.96).abs() < 1e-6);
    }

    #[test]
    fn serde_keeps_bits_and_validates() {
        let e = UnitVector::normalize(&[0.3f64, -1.7, 2.2]).unwrap();
        let json = serde_json::to_string(&e).unwrap();
        let back: UnitVector<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(e, back);
        assert!(serde_json::from_str::<UnitVector<f64>>("[1.0, 1.0]").is_err());
    }

    fn raw_vec() -> impl Strategy<Value = Vec<f64>> {
        (1usize..32).prop_flat_map(|n| prop::collection::vec(-1e3f64..1e3, n))
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in raw_vec()) {
            if let Ok(e) = UnitVector::normalize(&raw) {
                let again = UnitVector::normalize(e.values()).unwrap();
                prop_assert!(close(e.values(), again.values(), 1e-12));
                prop_assert!((e.dot(&e).unwrap() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn inner_product_symmetric_and_bounded(
            pair in (1usize..32).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            ))
        ) {
            let (a, b) = pair;
            if let (Ok(a), Ok(b)) = (UnitVector::normalize(&a), UnitVector::normalize(&b)) {
                let ab = a.dot(&b).unwrap();
                let ba = b.dot(&a).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn raw_dot_is_bilinear(
            v in (1usize..16).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )),
            alpha in -5.0f64..5.0,
        ) {
            let (a, b, c) = v;
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
            let lhs = dot_slices(&sum, &c);
            let rhs = alpha * dot_slices(&a, &c) + dot_slices(&b, &c);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}
