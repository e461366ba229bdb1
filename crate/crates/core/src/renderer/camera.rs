//! Pinhole camera with OpenCV axis conventions (x right, y down, z forward).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NEAR: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// World-to-view rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// World-to-view translation.
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            rotation: rotation.transpose().into(),
            translation: translation.into(),
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near: DEFAULT_NEAR,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, image `width`×`height` with a
    /// vertical field of view in degrees. World +y is up.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        fov_y_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidArgument("camera eye coincides with target".into()));
        }
        let forward = forward.normalize();
        let mut right = forward.cross(&Vector3::y());
        if right.norm() < 1e-9 {
            // looking straight up or down
            right = Vector3::x();
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye);
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(Error::InvalidArgument(format!("field of view {fov_y_deg} out of range")));
        }
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Self::new(r, t, f, f, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be at least 1×1".into()));
        }
        if !(self.near >= 0.0) {
            return Err(Error::InvalidArgument("near plane must be non-negative".into()));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn world_to_view(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation_vector()
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    /// Pixel coordinates of a view-space point (no near-plane check).
    pub fn project_view(&self, v: Vector3<f64>) -> [f64; 2] {
        [self.fx * v.x / v.z + self.cx, self.fy * v.y / v.z + self.cy]
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }
}

/// Camera on a sphere of `radius` around the origin at the given azimuth and
/// elevation (degrees). Azimuth 0, elevation 0 sits on +z looking toward -z.
pub fn orbit_camera(
    azimuth_deg: f64,
    elevation_deg: f64,
    radius: f64,
    fov_y_deg: f64,
    width: usize,
    height: usize,
) -> Result<Camera> {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let eye = Vector3::new(radius * el.cos() * az.sin(), radius * el.sin(), radius * el.cos() * az.cos());
    Camera::look_at(eye, Vector3::zeros(), fov_y_deg, width, height)
}
