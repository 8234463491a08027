//! Monte-Carlo sliced-Wasserstein distance.

use rayon::prelude::*;

use crate::geometry::dot;
use crate::ot1d::w2_same_grid;
use crate::rng::StreamKey;
use crate::{build_sketch, DirectionSet, Error, PointCloud, QuantileTable, Result, TargetSketch};

/// Default direction count of a [`Monitor`].
pub const MONITOR_DIRECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SwEstimate {
    /// Average of the per-direction 1D W2 distances.
    pub value: f64,
    /// Monte-Carlo standard error: sample std of the per-direction values
    /// over `sqrt(N_θ)`. Zero for a single direction.
    pub std_error: f64,
    pub per_direction: Vec<f64>,
}

impl SwEstimate {
    fn from_values(per_direction: Vec<f64>) -> Self {
        let n = per_direction.len() as f64;
        let value = per_direction.iter().sum::<f64>() / n;
        let std_error = if per_direction.len() > 1 {
            let var = per_direction.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        SwEstimate { value, std_error, per_direction }
    }
}

fn projected_table(cloud: &PointCloud, theta: &[f64], q: usize) -> Result<QuantileTable> {
    let mut proj: Vec<f64> = cloud.rows().map(|x| dot(x, theta)).collect();
    proj.sort_unstable_by(f64::total_cmp);
    QuantileTable::from_sorted(&proj, q)
}

fn check_dims(cloud: &PointCloud, dirs: &DirectionSet) -> Result<()> {
    if cloud.dim() != dirs.dim() {
        return Err(Error::DimensionMismatch { expected: dirs.dim(), got: cloud.dim() });
    }
    Ok(())
}

/// Sliced W2 estimate between two clouds along `dirs`, with `q` quantiles.
pub fn sw2_estimate(a: &PointCloud, b: &PointCloud, dirs: &DirectionSet, q: usize) -> Result<f64> {
    sw2_estimate_detailed(a, b, dirs, q).map(|e| e.value)
}

pub fn sw2_estimate_detailed(
    a: &PointCloud,
    b: &PointCloud,
    dirs: &DirectionSet,
    q: usize,
) -> Result<SwEstimate> {
    check_dims(a, dirs)?;
    check_dims(b, dirs)?;
    if q < 2 {
        return Err(Error::invalid(format!("quantile count must be >= 2, got {q}")));
    }
    let per = (0..dirs.len())
        .into_par_iter()
        .map(|n| {
            let theta = dirs.direction(n);
            let ta = projected_table(a, theta, q)?;
            let tb = projected_table(b, theta, q)?;
            Ok(w2_same_grid(ta.values(), tb.values()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SwEstimate::from_values(per))
}

/// Convergence monitor: the sliced distance from a particle cloud to the
/// target, with the target side precomputed on its own directions.
#[derive(Debug, Clone)]
pub struct Monitor {
    sketch: TargetSketch,
}

impl Monitor {
    /// Tabulates `data` along `n_theta` directions drawn from the
    /// `"monitor"` substream of `seed`.
    pub fn from_data(data: &PointCloud, n_theta: usize, q: usize, seed: u64) -> Result<Self> {
        let key = StreamKey::root(seed).named("monitor");
        let dirs = DirectionSet::sample(data.dim(), n_theta, seed, &key)?;
        Ok(Monitor { sketch: build_sketch(data, &dirs, q, None, seed)? })
    }

    pub fn from_sketch(sketch: TargetSketch) -> Self {
        Monitor { sketch }
    }

    pub fn sketch(&self) -> &TargetSketch {
        &self.sketch
    }

    pub fn evaluate(&self, cloud: &PointCloud) -> Result<SwEstimate> {
        let dirs = self.sketch.directions();
        check_dims(cloud, dirs)?;
        let q = self.sketch.q();
        let per = (0..dirs.len())
            .into_par_iter()
            .map(|n| {
                let t = projected_table(cloud, dirs.direction(n), q)?;
                Ok(w2_same_grid(t.values(), self.sketch.table(n).values()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SwEstimate::from_values(per))
    }
}
