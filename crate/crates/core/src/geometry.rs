//! Random directions on the unit sphere and projections onto them.

use rand_distr::{Distribution, StandardNormal};

use crate::rng::StreamKey;
use crate::{Error, PointCloud, Result};

/// Gaussian draws with a norm below this are discarded and redrawn.
const MIN_DRAW_NORM: f64 = 1e-12;
/// Accepted deviation of a stored direction's norm from 1.
const UNIT_TOLERANCE: f64 = 1e-12;

/// `N_θ` unit vectors in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dirs: Vec<f64>,
    dim: usize,
    seed: u64,
}

/// Samples `n_theta` i.i.d. uniform directions on `S^{d-1}` from the
/// `"directions"` substream of `seed`.
pub fn sample_directions(d: usize, n_theta: usize, seed: u64) -> Result<DirectionSet> {
    DirectionSet::sample(d, n_theta, seed, &StreamKey::root(seed).named("directions"))
}

impl DirectionSet {
    /// Samples by normalizing standard Gaussian vectors drawn sequentially
    /// from `key`. `seed` is only recorded.
    pub fn sample(d: usize, n_theta: usize, seed: u64, key: &StreamKey) -> Result<Self> {
        if d == 0 || n_theta == 0 {
            return Err(Error::invalid(format!(
                "direction set needs d >= 1 and n_theta >= 1 (got d={d}, n_theta={n_theta})"
            )));
        }
        let mut rng = key.rng();
        let mut dirs = Vec::with_capacity(d * n_theta);
        let mut draw = vec![0.0; d];
        for _ in 0..n_theta {
            let norm = loop {
                for v in draw.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let norm = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm >= MIN_DRAW_NORM {
                    break norm;
                }
            };
            dirs.extend(draw.iter().map(|v| v / norm));
        }
        Ok(DirectionSet { dirs, dim: d, seed })
    }

    /// Wraps explicit vectors; each must already be a unit vector.
    pub fn from_vectors(dirs: Vec<f64>, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || dirs.is_empty() || !dirs.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not form a non-empty set of {dim}-vectors",
                dirs.len()
            )));
        }
        for (n, v) in dirs.chunks_exact(dim).enumerate() {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::invalid(format!("direction {n} has norm {norm}")));
            }
        }
        Ok(DirectionSet { dirs, dim, seed })
    }

    pub fn len(&self) -> usize {
        self.dirs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn direction(&self, n: usize) -> &[f64] {
        &self.dirs[n * self.dim..(n + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.dirs.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.dirs
    }

    /// The first `n` directions.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!(
                "cannot take {n} of {} directions",
                self.len()
            )));
        }
        Ok(DirectionSet { dirs: self.dirs[..n * self.dim].to_vec(), dim: self.dim, seed: self.seed })
    }

    /// Hash of the exact direction bits, used to check that shards and
    /// records were produced against the same set.
    pub fn fingerprint(&self) -> u64 {
        let mut h = mix64(self.dim as u64 ^ 0x5357_4449_5253_4554);
        for v in &self.dirs {
            h = mix64(h ^ v.to_bits());
        }
        h
    }
}

/// Inner products of every point with `theta`.
pub fn project(points: &PointCloud, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != points.dim() {
        return Err(Error::DimensionMismatch { expected: points.dim(), got: theta.len() });
    }
    Ok(points.rows().map(|x| dot(x, theta)).collect())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
