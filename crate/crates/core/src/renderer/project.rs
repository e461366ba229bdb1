//! Perspective projection of world Gaussians to screen-space ellipses.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::camera::Camera;
use super::gaussians::{quat_to_matrix, quat_to_matrix_backward, WorldGaussianSet, WorldGradients};
use super::{ALPHA_EPS, COV2D_DILATION, MIN_COV2D_DET};
use crate::error::{ensure_len, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedGaussian {
    /// Pixel-space mean.
    pub mean: [f64; 2],
    /// Dilated 2D covariance `[xx, xy, yy]` in px².
    pub cov: [f64; 3],
    /// Inverse covariance `[a, b, c]`, `q = a·dx² + 2b·dx·dy + c·dy²`.
    pub conic: [f64; 3],
    /// View-space z.
    pub depth: f64,
    /// Largest Mahalanobis distance at which the Gaussian can still
    /// contribute a per-pixel alpha of at least [`ALPHA_EPS`].
    pub q_max: f64,
    /// Radius in px of the circle enclosing the contributing footprint.
    pub radius: f64,
    /// Behind the near plane.
    pub culled: bool,
    /// Culled, singular, or too transparent to ever contribute.
    pub skipped: bool,
}

impl ProjectedGaussian {
    fn inactive(depth: f64, culled: bool) -> Self {
        Self {
            mean: [0.0; 2],
            cov: [0.0; 3],
            conic: [0.0; 3],
            depth,
            q_max: 0.0,
            radius: 0.0,
            culled,
            skipped: true,
        }
    }

    pub fn is_active(&self) -> bool {
        !self.skipped
    }
}

#[inline]
fn jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * t.x * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * t.y * iz * iz,
    )
}

#[inline]
fn covariance_factor(scale: [f64; 3], rotation: [f64; 4]) -> (Matrix3<f64>, Matrix3<f64>) {
    let r = quat_to_matrix(rotation);
    let m = r * Matrix3::from_diagonal(&Vector3::from(scale));
    (r, m)
}

pub(crate) fn project_one(
    mu: [f64; 3],
    scale: [f64; 3],
    rotation: [f64; 4],
    alpha: f64,
    cam: &Camera,
    w: &Matrix3<f64>,
) -> ProjectedGaussian {
    let t = w * Vector3::from(mu) + cam.translation_vector();
    if t.z < cam.near || t.z <= 0.0 {
        return ProjectedGaussian::inactive(t.z, true);
    }
    let (_, m) = covariance_factor(scale, rotation);
    let v = w * (m * m.transpose()) * w.transpose();
    let j = jacobian(cam, &t);
    let s: Matrix2<f64> = j * v * j.transpose();
    let cov = [s[(0, 0)] + COV2D_DILATION, 0.5 * (s[(0, 1)] + s[(1, 0)]), s[(1, 1)] + COV2D_DILATION];
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > MIN_COV2D_DET) || !(alpha > ALPHA_EPS) {
        return ProjectedGaussian::inactive(t.z, false);
    }
    let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
    let q_max = 2.0 * (alpha / ALPHA_EPS).ln();
    let mid = 0.5 * (cov[0] + cov[2]);
    let lambda_max = mid + (0.25 * (cov[0] - cov[2]).powi(2) + cov[1] * cov[1]).sqrt();
    let mean = cam.project_view(t);
    ProjectedGaussian {
        mean,
        cov,
        conic,
        depth: t.z,
        q_max,
        radius: (q_max * lambda_max).sqrt(),
        culled: false,
        skipped: false,
    }
}

/// Projects every Gaussian. Entries behind the near plane carry `culled`;
/// entries that can never contribute carry `skipped`.
pub fn project(world: &WorldGaussianSet, cam: &Camera) -> Vec<ProjectedGaussian> {
    let w = cam.rotation_matrix();
    (0..world.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| project_one(world.mu[i], world.scale[i], world.rotation[i], world.alpha[i], cam, &w))
        .collect()
}

/// Gradient with respect to one projected Gaussian's screen-space quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScreenGradient {
    pub mean: [f64; 2],
    /// With respect to `[a, b, c]` of the conic, `b` counted once.
    pub conic: [f64; 3],
    pub color: [f64; 3],
    pub alpha: f64,
}

impl ScreenGradient {
    pub(crate) fn accumulate(&mut self, o: &ScreenGradient) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.alpha += o.alpha;
    }
}

/// Chain rule from screen-space gradients to world-space attributes.
pub fn project_backward(
    world: &WorldGaussianSet,
    cam: &Camera,
    projected: &[ProjectedGaussian],
    screen: &[ScreenGradient],
) -> Result<WorldGradients> {
    let n = world.len();
    ensure_len("projected gaussians", n, projected.len())?;
    ensure_len("screen gradients", n, screen.len())?;
    let w = cam.rotation_matrix();
    let rows: Vec<_> = (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let g = &screen[i];
            let p = &projected[i];
            let color = g.color;
            let alpha = g.alpha;
            if p.skipped {
                return ([0.0; 3], [0.0; 3], [0.0; 4], color, alpha);
            }
            let (mu, scale, rot) = (world.mu[i], world.scale[i], world.rotation[i]);
            let t = w * Vector3::from(mu) + cam.translation_vector();
            let (r, m) = covariance_factor(scale, rot);
            let v = w * (m * m.transpose()) * w.transpose();
            let j = jacobian(cam, &t);

            let [a, b, c] = p.conic;
            let k = Matrix2::new(a, b, b, c);
            let gk = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
            let g2 = -(k * gk * k);

            let g_v = j.transpose() * g2 * j;
            let g_j = 2.0 * g2 * j * v;

            let iz = 1.0 / t.z;
            let iz2 = iz * iz;
            let mut gt = Vector3::new(
                g_j[(0, 2)] * (-cam.fx * iz2),
                g_j[(1, 2)] * (-cam.fy * iz2),
                g_j[(0, 0)] * (-cam.fx * iz2)
                    + g_j[(0, 2)] * (2.0 * cam.fx * t.x * iz2 * iz)
                    + g_j[(1, 1)] * (-cam.fy * iz2)
                    + g_j[(1, 2)] * (2.0 * cam.fy * t.y * iz2 * iz),
            );
            let [gu, gv] = g.mean;
            gt += Vector3::new(
                gu * cam.fx * iz,
                gv * cam.fy * iz,
                -gu * cam.fx * t.x * iz2 - gv * cam.fy * t.y * iz2,
            );
            let g_mu = w.transpose() * gt;

            let g_sigma = w.transpose() * g_v * w;
            let g_m = 2.0 * g_sigma * m;
            let mut g_r = Matrix3::zeros();
            let mut g_s = [0.0; 3];
            for jj in 0..3 {
                for ii in 0..3 {
                    g_r[(ii, jj)] = g_m[(ii, jj)] * scale[jj];
                    g_s[jj] += g_m[(ii, jj)] * r[(ii, jj)];
                }
            }
            let g_q = quat_to_matrix_backward(rot, &g_r);
            (g_mu.into(), g_s, g_q, color, alpha)
        })
        .collect();
    let mut out = WorldGradients::zeros(n);
    for (i, (m, s, q, c, a)) in rows.into_iter().enumerate() {
        out.mu[i] = m;
        out.scale[i] = s;
        out.rotation[i] = q;
        out.color[i] = c;
        out.alpha[i] = a;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front_camera() -> Camera {
        Camera::new(Matrix3::identity(), Vector3::zeros(), 100.0, 100.0, 32.0, 32.0, 64, 64).unwrap()
    }

    fn one(mu: [f64; 3], s: f64) -> WorldGaussianSet {
        let mut w = WorldGaussianSet::default();
        w.push(mu, [s; 3], [1.0, 0.0, 0.0, 0.0], [1.0; 3], 0.9);
        w
    }

    #[test]
    fn on_axis_maps_to_principal_point() {
        let p = project(&one([0.0, 0.0, 3.0], 0.1), &front_camera());
        assert_eq!(p[0].mean, [32.0, 32.0]);
        assert_eq!(p[0].depth, 3.0);
        assert!(!p[0].culled);
    }

    #[test]
    fn isotropic_covariance() {
        let (f, s, d) = (100.0, 0.1, 3.0);
        let p = project(&one([0.0, 0.0, d], s), &front_camera());
        let expect = (f * s / d) * (f * s / d) + 0.3;
        assert!((p[0].cov[0] - expect).abs() < 1e-12);
        assert!((p[0].cov[2] - expect).abs() < 1e-12);
        assert!(p[0].cov[1].abs() < 1e-12);
    }

    #[test]
    fn near_plane_culls() {
        let p = project(&one([0.0, 0.0, 0.01], 0.1), &front_camera());
        assert!(p[0].culled && p[0].skipped);
        let p = project(&one([0.0, 0.0, -2.0], 0.1), &front_camera());
        assert!(p[0].culled);
    }
}
