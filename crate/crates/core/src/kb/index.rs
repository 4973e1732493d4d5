//! Exact flat inner-product index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::embedding::{dot_slices, UnitVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major store of unit vectors, scanned exhaustively on every query.
#[derive(Debug, Clone)]
pub struct FlatIndex<T> {
    dim: usize,
    data: Vec<T>,
}

/// A scored row. Orders "worse first": lower similarity, then later insertion.
#[derive(Debug, Clone, Copy)]
struct Ranked<T> {
    sim: T,
    row: usize,
}

impl<T: Scalar> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Ranked<T> {}

impl<T: Scalar> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Similarities are finite (unit vectors), so partial_cmp never fails.
        other
            .sim
            .partial_cmp(&self.sim)
            .unwrap_or(Ordering::Equal)
            .then(self.row.cmp(&other.row))
    }
}

impl<T: Scalar> FlatIndex<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Appends a vector and returns its row number.
    pub fn push(&mut self, v: &UnitVector<T>) -> Result<usize> {
        self.check_dim(v)?;
        self.data.extend_from_slice(v.values());
        Ok(self.len() - 1)
    }

    /// The `min(k, len)` rows with the largest inner product against `query`,
    /// best first. Equal similarities keep insertion order.
    pub fn top_k(&self, query: &UnitVector<T>, k: usize) -> Result<Vec<(usize, T)>> {
        self.check_dim(query)?;
        if k == 0 || self.is_empty() {
            return Ok(Vec::new());
        }
        let q = query.values();
        let mut heap: BinaryHeap<Ranked<T>> = BinaryHeap::with_capacity(k + 1);
        for (row, chunk) in self.data.chunks_exact(self.dim).enumerate() {
            let cand = Ranked {
                sim: dot_slices(q, chunk),
                row,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(worst) = heap.peek() {
                if cand < *worst {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| (r.row, r.sim))
            .collect())
    }

    fn check_dim(&self, v: &UnitVector<T>) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        Ok(())
    }
}
