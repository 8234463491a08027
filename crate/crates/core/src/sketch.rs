//! Target sketches: one quantile table per direction of the projected data.
//!
//! The flow never reads the dataset itself, only a [`TargetSketch`]. A
//! sketch can be built in one pass ([`build_sketch`]), or assembled from
//! independently produced shards ([`shard_projections`] +
//! [`merge_shard_sketches`]) which gives a bit-identical result.
//!
//! File format (`SWSK`, little-endian): magic, `u32` version = 1, `u32 d`,
//! `u32 n_theta`, `u32 q`, `u64` seed, `u64` source fingerprint, then
//! `n_theta` directions of `d` f64, then `n_theta` tables of `q` f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use itertools::Itertools;
use rand::seq::index;
use rayon::prelude::*;

use crate::geometry::{dot, mix64};
use crate::io::{to_u32, write_f64s, write_u32, write_u64, BinReader};
use crate::rng::StreamKey;
use crate::{DirectionSet, Error, PointCloud, QuantileTable, Result};

const MAGIC: &[u8; 4] = b"SWSK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSketch {
    directions: DirectionSet,
    tables: Vec<QuantileTable>,
    q: usize,
    source_fingerprint: u64,
}

impl TargetSketch {
    pub fn new(
        directions: DirectionSet,
        tables: Vec<QuantileTable>,
        source_fingerprint: u64,
    ) -> Result<Self> {
        if tables.len() != directions.len() {
            return Err(Error::invalid(format!(
                "{} tables for {} directions",
                tables.len(),
                directions.len()
            )));
        }
        let q = tables[0].q();
        if tables.iter().any(|t| t.q() != q) {
            return Err(Error::invalid("sketch tables have different quantile counts"));
        }
        Ok(TargetSketch { directions, tables, q, source_fingerprint })
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn tables(&self) -> &[QuantileTable] {
        &self.tables
    }

    pub fn table(&self, n: usize) -> &QuantileTable {
        &self.tables[n]
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.directions.dim()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn source_fingerprint(&self) -> u64 {
        self.source_fingerprint
    }
}

/// Order-independent hash of the multiset of rows.
fn content_hash(data: &PointCloud) -> u64 {
    data.rows()
        .map(|row| row.iter().fold(0x243F_6A88_85A3_08D3u64, |h, v| mix64(h ^ v.to_bits())))
        .fold(0u64, |acc, h| acc.wrapping_add(h))
}

fn fingerprint(content: u64, rows: usize, q: usize, batch: Option<(usize, u64)>) -> u64 {
    let mut h = mix64(content ^ 0x5357_534B);
    h = mix64(h ^ rows as u64);
    h = mix64(h ^ q as u64);
    if let Some((size, seed)) = batch {
        h = mix64(h ^ size as u64);
        h = mix64(h ^ seed);
    }
    h
}

/// Builds the target sketch of `data` along `dirs`.
///
/// With `batch = Some(b)`, every direction uses its own uniformly drawn
/// subset of `b` distinct rows (stream `n` of the `"batch"` substream of
/// `seed`). `b` equal to the dataset size is the same as no batching.
pub fn build_sketch(
    data: &PointCloud,
    dirs: &DirectionSet,
    q: usize,
    batch: Option<usize>,
    seed: u64,
) -> Result<TargetSketch> {
    if data.len() < 2 {
        return Err(Error::invalid("sketch needs at least 2 data points"));
    }
    if q < 2 {
        return Err(Error::invalid(format!("quantile count must be >= 2, got {q}")));
    }
    if data.dim() != dirs.dim() {
        return Err(Error::DimensionMismatch { expected: dirs.dim(), got: data.dim() });
    }
    let p = data.len();
    let batch = match batch {
        Some(0) => return Err(Error::invalid("mini-batch size must be positive")),
        Some(b) if b > p => {
            return Err(Error::invalid(format!("mini-batch size {b} exceeds {p} data points")))
        }
        Some(b) if b == p => None,
        other => other,
    };
    let batch_key = StreamKey::root(seed).named("batch");

    let tables = (0..dirs.len())
        .into_par_iter()
        .map(|n| {
            let theta = dirs.direction(n);
            let mut proj: Vec<f64> = match batch {
                None => data.rows().map(|x| dot(x, theta)).collect(),
                Some(b) => {
                    let mut rng = batch_key.stream(n as u64);
                    index::sample(&mut rng, p, b).into_iter().map(|i| dot(data.row(i), theta)).collect()
                }
            };
            proj.sort_unstable_by(f64::total_cmp);
            QuantileTable::from_sorted(&proj, q)
        })
        .collect::<Result<Vec<_>>>()?;

    let fp = fingerprint(content_hash(data), p, q, batch.map(|b| (b, seed)));
    TargetSketch::new(dirs.clone(), tables, fp)
}

/// Sorted projections of one data shard, ready to be merged.
#[derive(Debug, Clone)]
pub struct ShardProjections {
    directions: DirectionSet,
    sorted: Vec<Vec<f64>>,
    content_hash: u64,
    rows: usize,
}

impl ShardProjections {
    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn sorted(&self, n: usize) -> &[f64] {
        &self.sorted[n]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

/// Projects one shard onto every direction and sorts each projection.
pub fn shard_projections(shard: &PointCloud, dirs: &DirectionSet) -> Result<ShardProjections> {
    if shard.dim() != dirs.dim() {
        return Err(Error::DimensionMismatch { expected: dirs.dim(), got: shard.dim() });
    }
    let sorted = dirs
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|theta| {
            let mut proj: Vec<f64> = shard.rows().map(|x| dot(x, theta)).collect();
            proj.sort_unstable_by(f64::total_cmp);
            proj
        })
        .collect();
    Ok(ShardProjections {
        directions: dirs.clone(),
        sorted,
        content_hash: content_hash(shard),
        rows: shard.len(),
    })
}

/// Merges sorted shard projections into the sketch of their union.
pub fn merge_shard_sketches(shards: &[ShardProjections], q: usize) -> Result<TargetSketch> {
    let first = shards.first().ok_or(Error::Empty("shard list"))?;
    let fp = first.directions.fingerprint();
    for (i, s) in shards.iter().enumerate().skip(1) {
        if s.directions.fingerprint() != fp || s.directions != first.directions {
            return Err(Error::DirectionMismatch(format!(
                "shard {i} was projected on a different direction set"
            )));
        }
    }
    let rows: usize = shards.iter().map(|s| s.rows).sum();
    if rows < 2 {
        return Err(Error::invalid("sketch needs at least 2 data points"));
    }
    if q < 2 {
        return Err(Error::invalid(format!("quantile count must be >= 2, got {q}")));
    }
    let tables = (0..first.directions.len())
        .into_par_iter()
        .map(|n| {
            let merged: Vec<f64> = shards
                .iter()
                .map(|s| s.sorted[n].iter().copied())
                .kmerge_by(|a, b| a.total_cmp(b).is_lt())
                .collect();
            QuantileTable::from_sorted(&merged, q)
        })
        .collect::<Result<Vec<_>>>()?;
    let content = shards.iter().fold(0u64, |acc, s| acc.wrapping_add(s.content_hash));
    TargetSketch::new(first.directions.clone(), tables, fingerprint(content, rows, q, None))
}

pub fn write_sketch<W: Write>(sketch: &TargetSketch, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, to_u32(sketch.dim(), "d")?)?;
    write_u32(w, to_u32(sketch.len(), "n_theta")?)?;
    write_u32(w, to_u32(sketch.q, "q")?)?;
    write_u64(w, sketch.directions.seed())?;
    write_u64(w, sketch.source_fingerprint)?;
    write_f64s(w, sketch.directions.as_slice())?;
    for t in &sketch.tables {
        write_f64s(w, t.values())?;
    }
    Ok(())
}

pub fn read_sketch<R: Read>(r: R) -> Result<TargetSketch> {
    let mut r = BinReader::new(r);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let d = r.u32("d")? as usize;
    let n_theta = r.u32("n_theta")? as usize;
    let q = r.u32("q")? as usize;
    if d == 0 || n_theta == 0 || q < 2 {
        return r.fail(format!("invalid header d={d} n_theta={n_theta} q={q}"));
    }
    let seed = r.u64("seed")?;
    let fp = r.u64("fingerprint")?;
    let at = r.offset();
    let dirs = r.f64_vec(d * n_theta, "directions")?;
    let directions = DirectionSet::from_vectors(dirs, d, seed)
        .map_err(|e| Error::Format { offset: at, reason: e.to_string() })?;
    let mut tables = Vec::with_capacity(n_theta);
    for n in 0..n_theta {
        let at = r.offset();
        let values = r.f64_vec(q, "table")?;
        let t = QuantileTable::from_values(values)
            .map_err(|e| Error::Format { offset: at, reason: format!("table {n}: {e}") })?;
        tables.push(t);
    }
    r.expect_eof()?;
    TargetSketch::new(directions, tables, fp)
}

pub fn save_sketch(sketch: &TargetSketch, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sketch(sketch, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_sketch(path: impl AsRef<Path>) -> Result<TargetSketch> {
    read_sketch(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot1d::build_quantile_table;
    use crate::rng::substream;
    use crate::sample_directions;

    fn cloud(n: usize, d: usize, seed: u64) -> PointCloud {
        PointCloud::standard_gaussian(n, d, &substream(seed, "data")).unwrap()
    }

    #[test]
    fn identical_points_give_constant_tables() {
        let data = PointCloud::from_rows(&[[1.0, 2.0, 3.0]; 4]).unwrap();
        let dirs = sample_directions(3, 5, 1).unwrap();
        let s = build_sketch(&data, &dirs, 8, None, 0).unwrap();
        for t in s.tables() {
            assert!(t.values().iter().all(|v| *v == t.values()[0]));
        }
    }

    #[test]
    fn one_dimensional_grid() {
        let data = PointCloud::new((0..1000).map(f64::from).collect(), 1).unwrap();
        let dirs = DirectionSet::from_vectors(vec![1.0], 1, 0).unwrap();
        let s = build_sketch(&data, &dirs, 100, None, 0).unwrap();
        let samples: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(s.table(0), &build_quantile_table(&samples, 100).unwrap());
    }

    #[test]
    fn full_batch_is_the_dataset() {
        let data = cloud(300, 3, 1);
        let dirs = sample_directions(3, 7, 2).unwrap();
        let full = build_sketch(&data, &dirs, 50, None, 9).unwrap();
        let batched = build_sketch(&data, &dirs, 50, Some(300), 9).unwrap();
        assert_eq!(full, batched);
        let small = build_sketch(&data, &dirs, 50, Some(100), 9).unwrap();
        assert_ne!(full.tables(), small.tables());
        assert_ne!(full.source_fingerprint(), small.source_fingerprint());
        assert_eq!(small, build_sketch(&data, &dirs, 50, Some(100), 9).unwrap());
    }

    #[test]
    fn errors() {
        let data = cloud(10, 2, 1);
        let dirs = sample_directions(2, 3, 2).unwrap();
        assert!(build_sketch(&data, &dirs, 10, Some(11), 0).is_err());
        assert!(build_sketch(&data, &dirs, 1, None, 0).is_err());
        let one = cloud(1, 2, 1);
        assert!(build_sketch(&one, &dirs, 10, None, 0).is_err());
        let wrong = sample_directions(3, 3, 2).unwrap();
        assert!(build_sketch(&data, &wrong, 10, None, 0).is_err());
        assert!(matches!(merge_shard_sketches(&[], 10), Err(Error::Empty(_))));
    }

    #[test]
    fn permuting_directions_permutes_tables() {
        let data = cloud(200, 2, 3);
        let dirs = sample_directions(2, 4, 5).unwrap();
        let order = [2usize, 0, 3, 1];
        let permuted: Vec<f64> = order.iter().flat_map(|&n| dirs.direction(n).to_vec()).collect();
        let pdirs = DirectionSet::from_vectors(permuted, 2, 5).unwrap();
        let a = build_sketch(&data, &dirs, 20, None, 0).unwrap();
        let b = build_sketch(&data, &pdirs, 20, None, 0).unwrap();
        for (k, &n) in order.iter().enumerate() {
            assert_eq!(b.table(k), a.table(n));
        }
    }

    #[test]
    fn shards_merge_to_monolithic() {
        let data = cloud(503, 3, 4);
        let dirs = sample_directions(3, 6, 6).unwrap();
        let whole = build_sketch(&data, &dirs, 40, None, 0).unwrap();

        let single = merge_shard_sketches(&[shard_projections(&data, &dirs).unwrap()], 40).unwrap();
        assert_eq!(single, whole);

        let idx: Vec<usize> = (0..data.len()).collect();
        let shards: Vec<_> = idx
            .chunks(170)
            .map(|c| shard_projections(&data.select(c).unwrap(), &dirs).unwrap())
            .collect();
        assert_eq!(merge_shard_sketches(&shards, 40).unwrap(), whole);

        let other = sample_directions(3, 6, 7).unwrap();
        let bad = vec![shards[0].clone(), shard_projections(&data, &other).unwrap()];
        assert!(matches!(merge_shard_sketches(&bad, 40), Err(Error::DirectionMismatch(_))));
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let data = cloud(100, 2, 8);
        let dirs = sample_directions(2, 3, 9).unwrap();
        let s = build_sketch(&data, &dirs, 16, Some(50), 3).unwrap();
        let mut buf = Vec::new();
        write_sketch(&s, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 * 4 + 16 + 3 * 2 * 8 + 3 * 16 * 8);
        assert_eq!(read_sketch(&buf[..]).unwrap(), s);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_sketch(&bad[..]), Err(Error::Format { offset: 0, .. })));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(read_sketch(&bad[..]), Err(Error::Format { offset: 4, .. })));
        let truncated = &buf[..buf.len() - 3];
        match read_sketch(truncated) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, 36 + 48 + 2 * 128),
            other => panic!("{other:?}"),
        }
    }
}
