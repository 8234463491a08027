//! Transport-map records: the particle quantile tables of every training
//! iteration, kept so the trained flow can be replayed on new particles.
//!
//! `SWTM` file layout (little-endian):
//!
//! ```text
//! magic "SWTM" | u32 version = 1
//! config:      u64 n_particles | u32 n_theta | f64 step_size | f64 lambda
//!              u32 iterations | u32 quantiles | u64 seed | u32 flags
//!              (bit 0: resampled directions, bit 1: early stopping)
//! directions:  u32 d | u32 count | u64 seed | count * d f64
//! u32 frame_count
//! frames:      [n_theta u32 direction indices, resampled mode only]
//!              n_theta * quantiles f64
//! ```
//!
//! Frames have a fixed size, so frame `k` is addressed directly.
//! [`RecordWriter`] streams frames to disk during training and patches the
//! frame count when finished.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::flow::{DirectionMode, FlowConfig};
use crate::io::{to_u32, write_f64s, write_u32, write_u64, BinReader};
use crate::{DirectionSet, Error, QuantileTable, Result};

const MAGIC: &[u8; 4] = b"SWTM";
const VERSION: u32 = 1;
const FLAG_RESAMPLED: u32 = 1;
const FLAG_EARLY_STOP: u32 = 2;

/// Particle tables used by one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFrame {
    /// Positions in the sketch's direction pool, present in resampled mode.
    pub indices: Option<Vec<u32>>,
    pub tables: Vec<QuantileTable>,
}

/// Receives frames as a flow runs.
pub trait FrameSink {
    fn begin(&mut self, config: &FlowConfig, directions: &DirectionSet) -> Result<()>;
    fn push(&mut self, frame: &MapFrame) -> Result<()>;
    fn finish(&mut self) -> Result<()>;
}

/// Random access to recorded frames.
pub trait FrameSource {
    fn config(&self) -> &FlowConfig;
    fn directions(&self) -> &DirectionSet;
    fn frame_count(&self) -> usize;
    fn read_frame(&mut self, k: usize) -> Result<MapFrame>;
}

/// In-memory record.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMapRecord {
    pub config: FlowConfig,
    pub directions: DirectionSet,
    pub frames: Vec<MapFrame>,
}

impl TransportMapRecord {
    pub fn new(config: FlowConfig, directions: DirectionSet) -> Self {
        TransportMapRecord { config, directions, frames: Vec::new() }
    }
}

impl FrameSource for TransportMapRecord {
    fn config(&self) -> &FlowConfig {
        &self.config
    }

    fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn read_frame(&mut self, k: usize) -> Result<MapFrame> {
        self.frames
            .get(k)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("record has no frame {k}")))
    }
}

/// Collects frames in memory. `begin` resets the record.
impl FrameSink for TransportMapRecord {
    fn begin(&mut self, config: &FlowConfig, directions: &DirectionSet) -> Result<()> {
        self.config = config.clone();
        self.directions = directions.clone();
        self.frames.clear();
        Ok(())
    }

    fn push(&mut self, frame: &MapFrame) -> Result<()> {
        self.frames.push(frame.clone());
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

fn write_header<W: Write>(w: &mut W, cfg: &FlowConfig, dirs: &DirectionSet) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u64(w, cfg.n_particles as u64)?;
    write_u32(w, to_u32(cfg.n_theta, "n_theta")?)?;
    write_f64s(w, &[cfg.step_size, cfg.lambda])?;
    write_u32(w, to_u32(cfg.iterations, "iterations")?)?;
    write_u32(w, to_u32(cfg.quantiles, "quantiles")?)?;
    write_u64(w, cfg.seed)?;
    let mut flags = 0;
    if cfg.direction_mode == DirectionMode::Resampled {
        flags |= FLAG_RESAMPLED;
    }
    if cfg.early_stop {
        flags |= FLAG_EARLY_STOP;
    }
    write_u32(w, flags)?;
    write_u32(w, to_u32(dirs.dim(), "d")?)?;
    write_u32(w, to_u32(dirs.len(), "direction count")?)?;
    write_u64(w, dirs.seed())?;
    write_f64s(w, dirs.as_slice())?;
    Ok(())
}

fn write_frame<W: Write>(w: &mut W, cfg: &FlowConfig, frame: &MapFrame) -> Result<()> {
    let resampled = cfg.direction_mode == DirectionMode::Resampled;
    if frame.tables.len() != cfg.n_theta || frame.indices.is_some() != resampled {
        return Err(Error::invalid("frame does not match the record configuration"));
    }
    if let Some(idx) = &frame.indices {
        if idx.len() != cfg.n_theta {
            return Err(Error::invalid("frame index count does not match n_theta"));
        }
        for &i in idx {
            write_u32(w, i)?;
        }
    }
    for t in &frame.tables {
        if t.q() != cfg.quantiles {
            return Err(Error::invalid("frame table has the wrong quantile count"));
        }
        write_f64s(w, t.values())?;
    }
    Ok(())
}

fn frame_size(cfg: &FlowConfig) -> u64 {
    let idx = if cfg.direction_mode == DirectionMode::Resampled { 4 * cfg.n_theta } else { 0 };
    (idx + 8 * cfg.n_theta * cfg.quantiles) as u64
}

/// Streams frames to a seekable writer.
pub struct RecordWriter<W: Write + Seek> {
    inner: W,
    config: Option<FlowConfig>,
    count_offset: u64,
    frames: u32,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        Ok(RecordWriter::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write + Seek> RecordWriter<W> {
    pub fn new(inner: W) -> Self {
        RecordWriter { inner, config: None, count_offset: 0, frames: 0 }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<W: Write + Seek> FrameSink for RecordWriter<W> {
    fn begin(&mut self, config: &FlowConfig, directions: &DirectionSet) -> Result<()> {
        self.inner.seek(SeekFrom::Start(0))?;
        write_header(&mut self.inner, config, directions)?;
        self.count_offset = self.inner.stream_position()?;
        write_u32(&mut self.inner, 0)?;
        self.config = Some(config.clone());
        self.frames = 0;
        Ok(())
    }

    fn push(&mut self, frame: &MapFrame) -> Result<()> {
        let cfg = self.config.as_ref().ok_or_else(|| Error::invalid("record not started"))?;
        write_frame(&mut self.inner, cfg, frame)?;
        self.frames += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        let end = self.inner.stream_position()?;
        self.inner.seek(SeekFrom::Start(self.count_offset))?;
        write_u32(&mut self.inner, self.frames)?;
        self.inner.seek(SeekFrom::Start(end))?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Reads frames on demand from a seekable source.
pub struct RecordReader<R: Read + Seek> {
    inner: R,
    config: FlowConfig,
    directions: DirectionSet,
    frame_count: usize,
    frames_offset: u64,
}

impl RecordReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        RecordReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read + Seek> RecordReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let total = inner.seek(SeekFrom::End(0))?;
        inner.seek(SeekFrom::Start(0))?;
        let mut r = BinReader::new(inner);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let n_particles = r.u64("n_particles")? as usize;
        let n_theta = r.u32("n_theta")? as usize;
        let step_size = r.f64("step_size")?;
        let lambda = r.f64("lambda")?;
        let iterations = r.u32("iterations")? as usize;
        let quantiles = r.u32("quantiles")? as usize;
        let seed = r.u64("seed")?;
        let at = r.offset();
        let flags = r.u32("flags")?;
        if flags & !(FLAG_RESAMPLED | FLAG_EARLY_STOP) != 0 {
            return Err(Error::Format { offset: at, reason: format!("unknown flags {flags:#x}") });
        }
        let config = FlowConfig {
            n_particles,
            n_theta,
            step_size,
            lambda,
            iterations,
            quantiles,
            seed,
            direction_mode: if flags & FLAG_RESAMPLED != 0 {
                DirectionMode::Resampled
            } else {
                DirectionMode::Fixed
            },
            record_maps: true,
            early_stop: flags & FLAG_EARLY_STOP != 0,
        };
        if let Err(e) = config.validate() {
            return r.fail(format!("invalid configuration: {e}"));
        }
        let d = r.u32("d")? as usize;
        let count = r.u32("direction count")? as usize;
        let dir_seed = r.u64("direction seed")?;
        let at = r.offset();
        let dirs = r.f64_vec(d * count, "directions")?;
        let directions = DirectionSet::from_vectors(dirs, d, dir_seed)
            .map_err(|e| Error::Format { offset: at, reason: e.to_string() })?;
        let frame_count = r.u32("frame count")? as usize;
        let frames_offset = r.offset();
        let expected = frames_offset + frame_count as u64 * frame_size(&config);
        if total != expected {
            return Err(Error::Format {
                offset: total.min(expected),
                reason: format!("file is {total} bytes, header implies {expected}"),
            });
        }
        Ok(RecordReader { inner: r.into_inner(), config, directions, frame_count, frames_offset })
    }
}

impl<R: Read + Seek> FrameSource for RecordReader<R> {
    fn config(&self) -> &FlowConfig {
        &self.config
    }

    fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    fn frame_count(&self) -> usize {
        self.frame_count
    }

    fn read_frame(&mut self, k: usize) -> Result<MapFrame> {
        if k >= self.frame_count {
            return Err(Error::invalid(format!("record has no frame {k}")));
        }
        let offset = self.frames_offset + k as u64 * frame_size(&self.config);
        self.inner.seek(SeekFrom::Start(offset))?;
        let mut r = BinReader::with_offset(&mut self.inner, offset);
        let n_theta = self.config.n_theta;
        let indices = match self.config.direction_mode {
            DirectionMode::Resampled => {
                let idx = r.u32_vec(n_theta, "frame indices")?;
                if let Some(bad) = idx.iter().find(|&&i| i as usize >= self.directions.len()) {
                    return r.fail(format!("frame {k} references direction {bad}"));
                }
                Some(idx)
            }
            DirectionMode::Fixed => None,
        };
        let mut tables = Vec::with_capacity(n_theta);
        for _ in 0..n_theta {
            let at = r.offset();
            let values = r.f64_vec(self.config.quantiles, "frame table")?;
            tables.push(
                QuantileTable::from_values(values)
                    .map_err(|e| Error::Format { offset: at, reason: e.to_string() })?,
            );
        }
        Ok(MapFrame { indices, tables })
    }
}

pub fn save_record(record: &TransportMapRecord, path: impl AsRef<Path>) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    w.begin(&record.config, &record.directions)?;
    for f in &record.frames {
        w.push(f)?;
    }
    w.finish()
}

pub fn load_record(path: impl AsRef<Path>) -> Result<TransportMapRecord> {
    let mut r = RecordReader::open(path)?;
    let frames = (0..r.frame_count()).map(|k| r.read_frame(k)).collect::<Result<Vec<_>>>()?;
    Ok(TransportMapRecord { config: r.config.clone(), directions: r.directions.clone(), frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample_directions;
    use std::io::Cursor;

    fn frame(cfg: &FlowConfig, k: usize) -> MapFrame {
        let tables = (0..cfg.n_theta)
            .map(|n| {
                QuantileTable::from_values(
                    (0..cfg.quantiles).map(|j| (k * 1000 + n * 10 + j) as f64).collect(),
                )
                .unwrap()
            })
            .collect();
        let indices = match cfg.direction_mode {
            DirectionMode::Resampled => Some((0..cfg.n_theta as u32).rev().collect()),
            DirectionMode::Fixed => None,
        };
        MapFrame { indices, tables }
    }

    fn round_trip(mode: DirectionMode) {
        let cfg = FlowConfig {
            n_particles: 10,
            n_theta: 3,
            quantiles: 4,
            iterations: 5,
            direction_mode: mode,
            record_maps: true,
            ..FlowConfig::default()
        };
        let dirs = sample_directions(2, 3, 1).unwrap();
        let mut w = RecordWriter::new(Cursor::new(Vec::new()));
        w.begin(&cfg, &dirs).unwrap();
        for k in 0..5 {
            w.push(&frame(&cfg, k)).unwrap();
        }
        w.finish().unwrap();
        let bytes = w.into_inner().into_inner();

        let mut r = RecordReader::new(Cursor::new(bytes.clone())).unwrap();
        assert_eq!(r.config(), &cfg);
        assert_eq!(r.directions(), &dirs);
        assert_eq!(r.frame_count(), 5);
        assert_eq!(r.read_frame(3).unwrap(), frame(&cfg, 3));
        assert_eq!(r.read_frame(0).unwrap(), frame(&cfg, 0));
        assert!(r.read_frame(5).is_err());

        let truncated = bytes[..bytes.len() - 1].to_vec();
        assert!(matches!(RecordReader::new(Cursor::new(truncated)), Err(Error::Format { .. })));
    }

    #[test]
    fn fixed_round_trip() {
        round_trip(DirectionMode::Fixed);
    }

    #[test]
    fn resampled_round_trip() {
        round_trip(DirectionMode::Resampled);
    }

    #[test]
    fn bad_magic() {
        let err = RecordReader::new(Cursor::new(b"SWSK\x01\0\0\0".to_vec())).err().unwrap();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
    }
}
