//! Sparse rows and row-major feature matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted sparse vector. Indices strictly increase and stored values are non-zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from unordered `(index, value)` pairs, summing duplicates
    /// and dropping zeros.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_unstable_by_key(|&(i, _)| i);
        let mut out = SparseVector::new();
        for (i, v) in pairs {
            match out.indices.last() {
                Some(&last) if last == i => *out.values.last_mut().unwrap() += v,
                _ => {
                    out.indices.push(i);
                    out.values.push(v);
                }
            }
        }
        out.retain_nonzero();
        out
    }

    /// Builds from already sorted, strictly increasing indices.
    pub fn from_sorted(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                actual: values.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "sparse indices must strictly increase".into(),
            ));
        }
        let mut v = SparseVector { indices, values };
        v.retain_nonzero();
        Ok(v)
    }

    fn retain_nonzero(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let (idx, val): (Vec<u32>, Vec<f64>) = self
            .indices
            .iter()
            .zip(&self.values)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&i, &v)| (i, v))
            .unzip();
        self.indices = idx;
        self.values = val;
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    /// Scales to unit L2 norm; the zero vector is left alone.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
    }

    /// Dot product with a dense vector. Indices past the end of `dense` contribute nothing.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter()
            .filter_map(|(i, v)| dense.get(i as usize).map(|w| w * v))
            .sum()
    }

    /// `dense += scale * self`
    pub fn axpy_into(&self, scale: f64, dense: &mut [f64]) {
        for (i, v) in self.iter() {
            dense[i as usize] += scale * v;
        }
    }

    /// Largest index plus one, or 0 for the zero vector.
    pub fn min_width(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    /// Appends `other` shifted by `offset`; `offset` must exceed every current index.
    pub(crate) fn extend_shifted(&mut self, other: &SparseVector, offset: u32) {
        debug_assert!(self.indices.last().is_none_or(|&l| l < offset));
        self.indices.extend(other.indices.iter().map(|i| i + offset));
        self.values.extend_from_slice(&other.values);
    }
}

/// Row-major sparse matrix with a fixed column count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<SparseVector>,
    width: usize,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<SparseVector>, width: usize) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.min_width() > width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: bad.min_width(),
            });
        }
        Ok(FeatureMatrix { rows, width })
    }

    /// Dense constructor, mostly for tests and toy problems.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let rows = rows
            .iter()
            .map(|r| {
                SparseVector::from_pairs(r.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect())
            })
            .collect();
        FeatureMatrix { rows, width }
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Subset of rows in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
            width: self.width,
        }
    }
}
