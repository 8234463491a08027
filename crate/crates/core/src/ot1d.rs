//! One-dimensional optimal transport on quantile tables.
//!
//! A [`QuantileTable`] stores `Q` empirical quantiles at the fixed midpoint
//! levels `(j + 0.5) / Q`. The quantile function is the piecewise-linear
//! interpolant through those knots (flat outside the outer knots) and the
//! CDF is its generalized inverse. In 1D the optimal map between two
//! measures is `F_target⁻¹ ∘ F_source`, so everything the flow needs reduces
//! to table lookups.

use crate::{Error, Result};

/// Monotone table of `Q >= 2` quantiles at levels `(j + 0.5) / Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    values: Vec<f64>,
}

#[inline]
fn level_of(j: usize, q: usize) -> f64 {
    (j as f64 + 0.5) / q as f64
}

impl QuantileTable {
    /// Empirical quantiles of `samples`. Order statistic positions are
    /// `tau * n - 0.5`, clamped to `[0, n - 1]`, with linear interpolation
    /// between neighbours.
    pub fn from_samples(samples: &[f64], q: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("quantile samples"));
        }
        if let Some(i) = samples.iter().position(|v| v.is_nan()) {
            return Err(Error::NotANumber(i));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        Self::from_sorted(&sorted, q)
    }

    /// As [`from_samples`](Self::from_samples) for input that is already
    /// sorted ascending and NaN-free.
    pub fn from_sorted(sorted: &[f64], q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::invalid(format!("quantile count must be >= 2, got {q}")));
        }
        let n = sorted.len();
        if n == 0 {
            return Err(Error::Empty("quantile samples"));
        }
        debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));

        // position (j + 0.5) * n / q - 0.5 = ((2j + 1) n - q) / 2q, kept exact
        // in integers so q == n lands on the order statistics themselves.
        let denom = 2 * q as u128;
        let mut values = Vec::with_capacity(q);
        for j in 0..q {
            let numer = (2 * j as i128 + 1) * n as i128 - q as i128;
            let v = if numer <= 0 {
                sorted[0]
            } else {
                let numer = numer as u128;
                let i = (numer / denom) as usize;
                let rem = numer % denom;
                if i >= n - 1 {
                    sorted[n - 1]
                } else if rem == 0 {
                    sorted[i]
                } else {
                    let f = rem as f64 / denom as f64;
                    let (a, b) = (sorted[i], sorted[i + 1]);
                    (a + f * (b - a)).clamp(a, b)
                }
            };
            values.push(v);
        }
        for j in 1..q {
            if values[j] < values[j - 1] {
                values[j] = values[j - 1];
            }
        }
        Ok(QuantileTable { values })
    }

    /// Wraps explicit knot values.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "quantile count must be >= 2, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite quantile value at knot {i}")));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!("quantile values decrease at knot {}", i + 1)));
        }
        Ok(QuantileTable { values })
    }

    pub fn q(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn level(&self, j: usize) -> f64 {
        level_of(j, self.q())
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.q()).map(|j| self.level(j))
    }

    /// Quantile function at `tau`.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::ProbabilityOutOfRange(tau));
        }
        Ok(self.quantile_unchecked(tau))
    }

    /// CDF (generalized inverse of the quantile function) at `z`.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        if z.is_nan() {
            return Err(Error::NotANumber(0));
        }
        Ok(self.cdf_unchecked(z))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, tau: f64) -> f64 {
        let q = self.q();
        let v = &self.values;
        if tau <= level_of(0, q) {
            return v[0];
        }
        if tau >= level_of(q - 1, q) {
            return v[q - 1];
        }
        let mut j = ((tau * q as f64 - 0.5).floor().max(0.0) as usize).min(q - 2);
        // the float guess can be one knot off; settle on level(j) <= tau < level(j+1)
        while j > 0 && tau < level_of(j, q) {
            j -= 1;
        }
        while j + 2 < q && tau >= level_of(j + 1, q) {
            j += 1;
        }
        let (lo, hi) = (level_of(j, q), level_of(j + 1, q));
        let f = (tau - lo) / (hi - lo);
        if f == 0.0 {
            v[j]
        } else {
            v[j] + f * (v[j + 1] - v[j])
        }
    }

    #[inline]
    pub(crate) fn cdf_unchecked(&self, z: f64) -> f64 {
        let q = self.q();
        let v = &self.values;
        let lo = v.partition_point(|&x| x < z);
        let hi = lo + v[lo..].partition_point(|&x| x <= z);
        if lo < hi {
            // z sits on one or more knots; a flat run maps to its middle level
            return 0.5 * (level_of(lo, q) + level_of(hi - 1, q));
        }
        if lo == 0 {
            return level_of(0, q);
        }
        if lo == q {
            return level_of(q - 1, q);
        }
        let j = lo - 1;
        let f = (z - v[j]) / (v[j + 1] - v[j]);
        let (a, b) = (level_of(j, q), level_of(j + 1, q));
        a + f * (b - a)
    }

    /// Same distribution re-tabulated on a `q`-level grid.
    pub fn resample(&self, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::invalid(format!("quantile count must be >= 2, got {q}")));
        }
        if q == self.q() {
            return Ok(self.clone());
        }
        let values = (0..q).map(|j| self.quantile_unchecked(level_of(j, q))).collect();
        QuantileTable::from_values(values)
    }

    /// Table of the distribution shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        QuantileTable { values: self.values.iter().map(|v| v + c).collect() }
    }
}

pub fn build_quantile_table(samples: &[f64], q: usize) -> Result<QuantileTable> {
    QuantileTable::from_samples(samples, q)
}

pub fn eval_quantile(table: &QuantileTable, tau: f64) -> Result<f64> {
    table.quantile(tau)
}

pub fn eval_cdf(table: &QuantileTable, z: f64) -> Result<f64> {
    table.cdf(z)
}

/// Wasserstein-2 distance between two tabulated 1D distributions: the
/// square root of the midpoint-rule integral of the squared quantile
/// difference. Tables with different `Q` are compared on the finer grid.
pub fn w2_1d(a: &QuantileTable, b: &QuantileTable) -> Result<f64> {
    if a.q() == b.q() {
        return Ok(w2_same_grid(a.values(), b.values()));
    }
    let q = a.q().max(b.q());
    Ok(w2_same_grid(a.resample(q)?.values(), b.resample(q)?.values()))
}

#[inline]
pub(crate) fn w2_same_grid(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq / a.len() as f64).sqrt()
}

/// Derivative of the 1D Kantorovich potential from the particle
/// distribution to the target: `z - F_target⁻¹(F_particles(z))`.
pub fn potential_derivative(
    z: f64,
    particle_table: &QuantileTable,
    target_table: &QuantileTable,
) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::NotANumber(0));
    }
    Ok(potential_derivative_unchecked(z, particle_table, target_table))
}

#[inline]
pub(crate) fn potential_derivative_unchecked(
    z: f64,
    particle_table: &QuantileTable,
    target_table: &QuantileTable,
) -> f64 {
    z - target_table.quantile_unchecked(particle_table.cdf_unchecked(z))
}
