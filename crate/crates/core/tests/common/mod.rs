#![allow(dead_code)]

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splat_avatar::geometry::TriangleFrame;
use splat_avatar::image::Image;
use splat_avatar::renderer::{Camera, LocalGaussianSet, RasterSettings, ProjectedGaussian, WorldGaussianSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Camera at the origin looking down +z.
pub fn axis_camera(size: usize, focal: f64) -> Camera {
    let c = 0.5 * size as f64;
    Camera::new(Matrix3::identity(), Vector3::zeros(), focal, focal, c, c, size, size).unwrap()
}

pub fn random_unit_quat(r: &mut impl Rng) -> [f64; 4] {
    let q: [f64; 4] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
    splat_avatar::renderer::normalize_quat(q)
}

pub fn random_frame(r: &mut impl Rng, center: Vector3<f64>) -> TriangleFrame {
    let q = random_unit_quat(r);
    let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    TriangleFrame::new(center, rot, r.random_range(0.3..0.7))
}

/// A random bound scene in front of `axis_camera`. Opacities stay moderate
/// so no pixel approaches the transmittance cutoff, and colors stay off the
/// clamp boundaries.
pub fn random_local_scene(r: &mut impl Rng, n: usize, n_frames: usize) -> (LocalGaussianSet, Vec<TriangleFrame>) {
    let frames: Vec<_> = (0..n_frames)
        .map(|_| {
            let c = Vector3::new(r.random_range(-0.4..0.4), r.random_range(-0.4..0.4), r.random_range(2.6..3.4));
            random_frame(r, c)
        })
        .collect();
    let mut set = LocalGaussianSet::default();
    for _ in 0..n {
        set.push(
            std::array::from_fn(|_| r.random_range(-0.5..0.5)),
            std::array::from_fn(|_| r.random_range(-1.2..-0.4)),
            std::array::from_fn(|_| r.random_range(-1.0..1.0)),
            std::array::from_fn(|_| r.random_range(0.05..0.95)),
            r.random_range(-2.5..0.5),
            r.random_range(0..n_frames as u32),
        );
    }
    (set, frames)
}

/// Random world scene for oracle comparisons, possibly with opaque
/// Gaussians and a few behind the camera.
pub fn random_world_scene(r: &mut impl Rng, n: usize) -> WorldGaussianSet {
    let mut w = WorldGaussianSet::default();
    for _ in 0..n {
        let z = r.random_range(-0.5..6.0);
        w.push(
            [r.random_range(-1.5..1.5), r.random_range(-1.5..1.5), z],
            std::array::from_fn(|_| r.random_range(0.01..0.4)),
            random_unit_quat(r),
            std::array::from_fn(|_| r.random_range(0.0..1.0)),
            r.random_range(0.0..1.0),
        );
    }
    w
}

pub fn random_settings(r: &mut impl Rng) -> RasterSettings {
    RasterSettings {
        tile_size: 16,
        background: std::array::from_fn(|_| r.random_range(0.0..1.0)),
    }
}

pub fn random_image(r: &mut impl Rng, w: usize, h: usize, ch: usize) -> Image {
    let data = (0..w * h * ch).map(|_| r.random_range(-1.0..1.0)).collect();
    Image::from_vec(w, h, ch, data).unwrap()
}

pub fn weighted_sum(img: &Image, weights: &Image) -> f64 {
    img.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn active(p: &[ProjectedGaussian]) -> usize {
    p.iter().filter(|g| g.is_active()).count()
}
