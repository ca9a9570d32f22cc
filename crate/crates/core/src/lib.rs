//! Geometry-derived guidance for mesh-driven video generation.
//!
//! Turns a coarse triangle mesh and a camera trajectory into the artifacts a
//! generative inbetweening pipeline consumes: exact optical flow with
//! occlusion masks, line-drawing edge maps, flow-warped Gaussian noise, the
//! latent replacement schedule for anchor-view sampling, stacked conditioning
//! volumes, and the non-neural evaluation metrics.
//!
//! Heavy per-pixel work runs on rayon when the `parallel` feature is enabled
//! (the default) and falls back to plain iterators otherwise. Every output is
//! independent of thread count.

pub mod container;
pub mod edges;
pub mod error;
pub mod flow;
pub mod ggi;
pub mod grid;
pub mod metrics;
pub mod noise;
pub mod par;
pub mod png_io;
pub mod raster;
pub mod rng;
pub mod sampling;
pub mod scene;
pub mod shade;

pub use error::{Error, Result};
pub use container::Tensor;
pub use grid::{Image, Plane};
