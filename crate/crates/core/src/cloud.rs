use rand_distr::{Distribution, StandardNormal};

use crate::rng::StreamKey;
use crate::{Error, Result};

/// N points in d dimensions, stored row-major.
///
/// Used both for particles (where `generation` is the iteration index) and
/// for datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    data: Vec<f64>,
    dim: usize,
    generation: usize,
}

impl PointCloud {
    /// Builds a cloud from row-major data. Entries must be finite.
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::Empty("point cloud"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry in row {} column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(PointCloud { data, dim, generation: 0 })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::Empty("point cloud"))?.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    /// `n` i.i.d. standard Gaussian points in `dim` dimensions; point `i`
    /// is drawn from stream `i` of `key`.
    pub fn standard_gaussian(n: usize, dim: usize, key: &StreamKey) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("point cloud"));
        }
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            let mut rng = key.stream(i as u64);
            data.extend((0..dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        }
        Self::new(data, dim)
    }

    pub(crate) fn from_parts(data: Vec<f64>, dim: usize, generation: usize) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        PointCloud { data, dim, generation }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn with_generation(mut self, generation: usize) -> Self {
        self.generation = generation;
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copy of the cloud with every point shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: offset.len() });
        }
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| v + offset[i % self.dim])
            .collect();
        Self::new(data, self.dim).map(|c| c.with_generation(self.generation))
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, self.dim)
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.rows() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Per-coordinate sample standard deviation (n - 1 denominator).
    pub fn std_dev(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut s = vec![0.0; self.dim];
        for row in self.rows() {
            for ((acc, v), m) in s.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        s.iter_mut().for_each(|v| *v = (*v / denom).sqrt());
        s
    }
}
