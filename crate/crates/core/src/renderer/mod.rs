//! Differentiable Gaussian splatting: posing, projection, tiled compositing
//! and the matching reverse pass.

mod camera;
mod gaussians;
mod pipeline;
mod project;
mod raster;

pub use camera::{orbit_camera, Camera, DEFAULT_NEAR};
pub use gaussians::{
    normalize_quat, pose_gaussians, pose_gaussians_backward, quat_mul, quat_to_matrix, sigmoid, AttributeGroup,
    LocalGaussianSet, LocalGradients, WorldGaussianSet, WorldGradients,
};
pub(crate) use gaussians::normalize_quat_backward;
pub use pipeline::{render, render_backward, RenderGradients, Rendered};
pub use project::{project, project_backward, ProjectedGaussian, ScreenGradient};
pub use raster::{rasterize, rasterize_backward, render_brute_force, RasterSettings, RasterState, RenderTarget};

/// Added to both diagonal entries of every 2D covariance, in px².
pub const COV2D_DILATION: f64 = 0.3;
/// Compositing stops once transmittance drops below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Per-pixel alphas below this are treated as zero.
pub const ALPHA_EPS: f64 = 1e-12;
/// 2D covariances with determinant at or below this are skipped.
pub const MIN_COV2D_DET: f64 = 1e-12;
pub const DEFAULT_TILE_SIZE: usize = 16;
