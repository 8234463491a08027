//! Sliced-Wasserstein flow.
//!
//! Transports a cloud of particles, initially drawn from a standard Gaussian,
//! towards an empirical target distribution. The target is only ever seen
//! through a [`TargetSketch`]: one quantile table of the projected data per
//! random direction. Each iteration builds the particles' own per-direction
//! quantile tables, evaluates the closed-form 1D optimal transport map along
//! every direction, averages the resulting displacements into a drift and
//! takes an Euler–Maruyama step with optional Brownian noise.
//!
//! ## Layout
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | direction sampling on the sphere, projections |
//! | [`ot1d`] | quantile tables, CDF inversion, 1D W2, potential derivative |
//! | [`sketch`] | target sketches, shard merging, the `SWSK` file format |
//! | [`flow`] | drift, Euler steps, the training loop, replay |
//! | [`record`] | transport-map records and the `SWTM` file format |
//! | [`metrics`] | Monte-Carlo sliced-Wasserstein estimation, the monitor |
//! | [`data`] | Gaussian mixtures, CSV and `SWMX` matrices |
//!
//! All randomness is derived from explicit seeds through named
//! [`rng::StreamKey`]s, so every run is bit-reproducible.

pub mod cloud;
pub mod data;
mod error;
pub mod flow;
pub mod geometry;
mod io;
pub mod metrics;
pub mod ot1d;
pub mod record;
pub mod rng;
pub mod sketch;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use flow::{
    drift, euler_step, replay_flow, run_flow, DirectionMode, FlowConfig, FlowLog, FlowOutcome,
    FlowRunner, LogRow,
};
pub use geometry::{project, sample_directions, DirectionSet};
pub use metrics::{sw2_estimate, Monitor, SwEstimate};
pub use ot1d::{
    build_quantile_table, eval_cdf, eval_quantile, potential_derivative, w2_1d, QuantileTable,
};
pub use record::{FrameSink, FrameSource, MapFrame, RecordReader, RecordWriter, TransportMapRecord};
pub use sketch::{build_sketch, load_sketch, merge_shard_sketches, save_sketch, TargetSketch};
