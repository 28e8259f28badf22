//! Differentiable edge-based optical proximity correction.
//!
//! Mask polygons are cut into short edge segments whose positions are the
//! optimization variables. Every iteration rounds the segments onto the
//! 1 nm grid, re-closes the corners, rasterizes the rings by ray casting,
//! images the mask through a sum-of-coherent-systems model, and pushes the
//! image-domain gradient back onto the segments along their normals. Mask
//! rules are enforced by damping segment velocities near spacing and width
//! limits.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fft;
pub mod fixtures;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod litho;
pub mod loss;
pub mod metrics;
pub mod mrc;
pub mod optimizer;
pub mod par;
pub mod raster;
pub mod sraf;

pub use error::{Error, Result};
pub use geometry::{Axis, Point, Polygon, SegmentSet};
pub use grid::Grid;
pub use litho::{KernelSet, ProcessCorner, Simulator};
pub use loss::{EpeSamplePlan, LossBundle, LossWeights};
pub use metrics::MetricsReport;
pub use mrc::MrcRuleSet;
pub use optimizer::{optimize, OptimizerConfig, OptimizeResult};
