//! Pose → project → rasterize, and the full reverse chain back to
//! triangle-local parameters.

use super::camera::Camera;
use super::gaussians::{pose_gaussians, pose_gaussians_backward, LocalGaussianSet, LocalGradients, WorldGaussianSet, WorldGradients};
use super::project::{project, project_backward, ScreenGradient};
use super::raster::{rasterize, rasterize_backward, RasterSettings, RenderTarget};
use crate::error::{Error, Result};
use crate::geometry::TriangleFrame;
use crate::image::Image;

/// A forward render together with the posed Gaussians it was made from.
#[derive(Clone, Debug)]
pub struct Rendered {
    pub target: RenderTarget,
    pub world: WorldGaussianSet,
    pub camera: Camera,
}

#[derive(Clone, Debug, Default)]
pub struct RenderGradients {
    pub local: LocalGradients,
    pub world: WorldGradients,
    pub screen: Vec<ScreenGradient>,
}

pub fn render(
    locals: &LocalGaussianSet,
    frames: &[TriangleFrame],
    cam: &Camera,
    settings: &RasterSettings,
) -> Result<Rendered> {
    let world = pose_gaussians(locals, frames)?;
    let projected = project(&world, cam);
    let target = rasterize(&projected, &world.color, &world.alpha, cam, settings)?;
    Ok(Rendered {
        target,
        world,
        camera: cam.clone(),
    })
}

pub fn render_backward(
    locals: &LocalGaussianSet,
    frames: &[TriangleFrame],
    rendered: &Rendered,
    d_rgb: &Image,
    d_alpha: &Image,
) -> Result<RenderGradients> {
    let state = rendered
        .target
        .state
        .as_ref()
        .ok_or(Error::MissingForwardState("render_backward"))?;
    let screen = rasterize_backward(&rendered.target, d_rgb, d_alpha)?;
    let world = project_backward(&rendered.world, &rendered.camera, state.projected(), &screen)?;
    let local = pose_gaussians_backward(locals, frames, &rendered.world, &world)?;
    Ok(RenderGradients { local, world, screen })
}
