//! Mesh-attached Gaussian avatars with a learned identity prior.
//!
//! The crate covers the whole path from a procedural head dataset to a
//! posed, rendered avatar: a differentiable tiled splat renderer, an
//! autodecoder prior trained on synthetic images, three-stage fitting to
//! enrollment images, latent-space analysis, file formats and benchmarks.

// NaN-rejecting `!(x > 0.0)` checks and indexed numeric loops are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod pipelines;
pub mod prior;
pub mod renderer;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};
