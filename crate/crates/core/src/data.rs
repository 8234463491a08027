//! Synthetic Gaussian mixtures and matrix files.
//!
//! Matrices are read and written either as headerless CSV (one point per
//! row) or as `SWMX` binary: magic, `u32` version = 1, `u32 n`, `u32 d`,
//! then `n * d` little-endian f64 in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::io::{to_u32, write_f64s, write_u32, BinReader};
use crate::rng::StreamKey;
use crate::{Error, PointCloud, Result};

const MAGIC: &[u8; 4] = b"SWMX";
const VERSION: u32 = 1;

/// Separation between component means used by the toy experiments, in
/// units of the mean component standard deviation.
pub const DEFAULT_MIN_SEPARATION: f64 = 6.0;

/// Mixture of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    pub means: Vec<Vec<f64>>,
    /// Per-coordinate variances of each component.
    pub variances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl GmmSpec {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        let d = self.dim();
        if k == 0 || d == 0 {
            return Err(Error::invalid("mixture needs at least one component of dimension >= 1"));
        }
        if self.variances.len() != k || self.weights.len() != k {
            return Err(Error::invalid("means, variances and weights disagree on component count"));
        }
        for c in 0..k {
            if self.means[c].len() != d || self.variances[c].len() != d {
                return Err(Error::invalid(format!("component {c} has the wrong dimension")));
            }
            if self.means[c].iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("component {c} has a non-finite mean")));
            }
            if self.variances[c].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("component {c} has a non-positive variance")));
            }
        }
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }
}

/// `p` i.i.d. samples from the mixture, with component labels.
pub fn gmm_sample_labeled(spec: &GmmSpec, p: usize) -> Result<(PointCloud, Vec<usize>)> {
    spec.validate()?;
    if p == 0 {
        return Err(Error::Empty("sample count"));
    }
    let d = spec.dim();
    let choose = WeightedIndex::new(&spec.weights).map_err(|e| Error::invalid(e.to_string()))?;
    let stds: Vec<Vec<f64>> = spec.variances.iter().map(|v| v.iter().map(|s| s.sqrt()).collect()).collect();
    let mut rng = StreamKey::root(spec.seed).named("gmm").rng();
    let mut data = Vec::with_capacity(p * d);
    let mut labels = Vec::with_capacity(p);
    for _ in 0..p {
        let c = choose.sample(&mut rng);
        labels.push(c);
        for (m, s) in spec.means[c].iter().zip(&stds[c]) {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(m + s * z);
        }
    }
    Ok((PointCloud::new(data, d)?, labels))
}

pub fn gmm_sample(spec: &GmmSpec, p: usize) -> Result<PointCloud> {
    gmm_sample_labeled(spec, p).map(|(c, _)| c)
}

/// Random mixture whose means are pairwise at least `min_separation` mean
/// component standard deviations apart.
///
/// Standard deviations are uniform in `[0.5, 1.5]` per coordinate, weights
/// are uniform in `[0.5, 1.5]` then normalized, and means are drawn
/// uniformly in a cube sized to fit the components, redrawing any mean that
/// lands too close to an earlier one.
pub fn random_gmm_spec(d: usize, n_components: usize, min_separation: f64, seed: u64) -> Result<GmmSpec> {
    if d == 0 || n_components == 0 {
        return Err(Error::invalid("mixture needs d >= 1 and at least one component"));
    }
    if !(min_separation >= 0.0 && min_separation.is_finite()) {
        return Err(Error::invalid(format!("invalid separation {min_separation}")));
    }
    let mut rng = StreamKey::root(seed).named("gmm-spec").rng();
    let stds: Vec<Vec<f64>> =
        (0..n_components).map(|_| (0..d).map(|_| rng.random_range(0.5..1.5)).collect()).collect();
    let mean_std = stds.iter().flatten().sum::<f64>() / (n_components * d) as f64;
    let gap = min_separation * mean_std;
    let mut half_width = gap * (n_components as f64).powf(1.0 / d as f64);
    if half_width == 0.0 {
        half_width = mean_std;
    }

    let mut means: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    let mut attempts = 0usize;
    while means.len() < n_components {
        let m: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..half_width)).collect();
        let ok = means.iter().all(|o| {
            o.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= gap
        });
        if ok {
            means.push(m);
        } else {
            attempts += 1;
            if attempts.is_multiple_of(10_000) {
                half_width *= 1.25;
                means.clear();
            }
        }
    }

    let raw: Vec<f64> = (0..n_components).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let rest: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - rest;

    let spec = GmmSpec {
        means,
        variances: stds.iter().map(|s| s.iter().map(|v| v * v).collect()).collect(),
        weights,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.csv` files are CSV, everything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

pub fn write_binary<W: Write>(cloud: &PointCloud, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, to_u32(cloud.len(), "n")?)?;
    write_u32(w, to_u32(cloud.dim(), "d")?)?;
    write_f64s(w, cloud.as_slice())
}

pub fn read_binary<R: Read>(r: R) -> Result<PointCloud> {
    let mut r = BinReader::new(r);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let n = r.u32("n")? as usize;
    let d = r.u32("d")? as usize;
    if n == 0 || d == 0 {
        return r.fail(format!("empty matrix {n} x {d}"));
    }
    let at = r.offset();
    let values = r.f64_vec(n * d, "matrix data")?;
    r.expect_eof()?;
    PointCloud::new(values, d).map_err(|e| Error::Format { offset: at, reason: e.to_string() })
}

pub fn write_csv<W: Write>(cloud: &PointCloud, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in cloud.rows() {
        // shortest representation that round-trips exactly
        out.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut data = Vec::new();
    let mut dim = None;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(Error::invalid(format!("csv row {} has {} columns, expected {d}", i + 1, record.len())))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::invalid(format!("csv row {}: cannot parse {field:?}", i + 1)))?;
            data.push(v);
        }
    }
    let dim = dim.ok_or(Error::Empty("csv matrix"))?;
    PointCloud::new(data, dim)
}

pub fn save_matrix(cloud: &PointCloud, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Csv => write_csv(cloud, &mut w)?,
        MatrixFormat::Binary => write_binary(cloud, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>, format: MatrixFormat) -> Result<PointCloud> {
    let r = BufReader::new(File::open(path)?);
    match format {
        MatrixFormat::Csv => read_csv(r),
        MatrixFormat::Binary => read_binary(r),
    }
}
