//! Triangle-local Gaussian attributes and their posing into world space.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{ensure_len, Error, Result};
use crate::geometry::TriangleFrame;

/// Gaussians stored relative to their bound triangle, in optimizer
/// parameterization: log scales, raw unit quaternions (`[w, x, y, z]`),
/// colors in `[0, 1]` and opacity logits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalGaussianSet {
    pub mu: Vec<[f64; 3]>,
    pub log_scale: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub color: Vec<[f64; 3]>,
    pub opacity_logit: Vec<f64>,
    pub binding_index: Vec<u32>,
}

/// Gradient (or offset) with the layout of a [`LocalGaussianSet`]'s
/// differentiable fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalGradients {
    pub mu: Vec<[f64; 3]>,
    pub log_scale: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub color: Vec<[f64; 3]>,
    pub opacity_logit: Vec<f64>,
}

/// Attribute groups in a fixed order, used wherever code iterates over all
/// differentiable fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributeGroup {
    Position,
    LogScale,
    Rotation,
    Color,
    Opacity,
}

impl AttributeGroup {
    pub const ALL: [AttributeGroup; 5] = [
        AttributeGroup::Position,
        AttributeGroup::LogScale,
        AttributeGroup::Rotation,
        AttributeGroup::Color,
        AttributeGroup::Opacity,
    ];

    pub fn arity(self) -> usize {
        match self {
            AttributeGroup::Position | AttributeGroup::LogScale | AttributeGroup::Color => 3,
            AttributeGroup::Rotation => 4,
            AttributeGroup::Opacity => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttributeGroup::Position => "position",
            AttributeGroup::LogScale => "log_scale",
            AttributeGroup::Rotation => "rotation",
            AttributeGroup::Color => "color",
            AttributeGroup::Opacity => "opacity_logit",
        }
    }
}

macro_rules! group_accessors {
    ($t:ty) => {
        impl $t {
            pub fn group(&self, g: AttributeGroup) -> &[f64] {
                match g {
                    AttributeGroup::Position => self.mu.as_flattened(),
                    AttributeGroup::LogScale => self.log_scale.as_flattened(),
                    AttributeGroup::Rotation => self.rotation.as_flattened(),
                    AttributeGroup::Color => self.color.as_flattened(),
                    AttributeGroup::Opacity => &self.opacity_logit,
                }
            }

            pub fn group_mut(&mut self, g: AttributeGroup) -> &mut [f64] {
                match g {
                    AttributeGroup::Position => self.mu.as_flattened_mut(),
                    AttributeGroup::LogScale => self.log_scale.as_flattened_mut(),
                    AttributeGroup::Rotation => self.rotation.as_flattened_mut(),
                    AttributeGroup::Color => self.color.as_flattened_mut(),
                    AttributeGroup::Opacity => &mut self.opacity_logit,
                }
            }

            pub fn len(&self) -> usize {
                self.opacity_logit.len()
            }

            pub fn is_empty(&self) -> bool {
                self.opacity_logit.is_empty()
            }
        }
    };
}

group_accessors!(LocalGaussianSet);
group_accessors!(LocalGradients);

impl LocalGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            mu: vec![[0.0; 3]; n],
            log_scale: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            color: vec![[0.0; 3]; n],
            opacity_logit: vec![0.0; n],
        }
    }

    /// `self += other * s`
    pub fn add_scaled(&mut self, other: &LocalGradients, s: f64) {
        for g in AttributeGroup::ALL {
            for (a, b) in self.group_mut(g).iter_mut().zip(other.group(g)) {
                *a += b * s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        AttributeGroup::ALL
            .iter()
            .flat_map(|&g| self.group(g).iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        AttributeGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|v| v.is_finite()))
    }
}

impl LocalGaussianSet {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            mu: Vec::with_capacity(n),
            log_scale: Vec::with_capacity(n),
            rotation: Vec::with_capacity(n),
            color: Vec::with_capacity(n),
            opacity_logit: Vec::with_capacity(n),
            binding_index: Vec::with_capacity(n),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        mu: [f64; 3],
        log_scale: [f64; 3],
        rotation: [f64; 4],
        color: [f64; 3],
        opacity_logit: f64,
        binding_index: u32,
    ) {
        self.mu.push(mu);
        self.log_scale.push(log_scale);
        self.rotation.push(rotation);
        self.color.push(color);
        self.opacity_logit.push(opacity_logit);
        self.binding_index.push(binding_index);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.opacity_logit.len();
        ensure_len("gaussian positions", n, self.mu.len())?;
        ensure_len("gaussian scales", n, self.log_scale.len())?;
        ensure_len("gaussian rotations", n, self.rotation.len())?;
        ensure_len("gaussian colors", n, self.color.len())?;
        ensure_len("gaussian bindings", n, self.binding_index.len())?;
        Ok(())
    }

    pub fn renormalize_rotations(&mut self) {
        for q in &mut self.rotation {
            *q = normalize_quat(*q);
        }
    }

    pub fn clamp_colors(&mut self) {
        for c in self.color.iter_mut().flatten() {
            *c = c.clamp(0.0, 1.0);
        }
    }

    /// Zero-valued differentiable fields with the same bindings.
    pub fn zeros_like(&self) -> LocalGradients {
        LocalGradients::zeros(self.len())
    }
}

/// Gaussians in world space with activated attributes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldGaussianSet {
    pub mu: Vec<[f64; 3]>,
    pub scale: Vec<[f64; 3]>,
    pub rotation: Vec<[f64; 4]>,
    pub color: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

impl WorldGaussianSet {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            mu: Vec::with_capacity(n),
            scale: Vec::with_capacity(n),
            rotation: Vec::with_capacity(n),
            color: Vec::with_capacity(n),
            alpha: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, mu: [f64; 3], scale: [f64; 3], rotation: [f64; 4], color: [f64; 3], alpha: f64) {
        self.mu.push(mu);
        self.scale.push(scale);
        self.rotation.push(rotation);
        self.color.push(color);
        self.alpha.push(alpha);
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Hamilton product `a ⊗ b`.
#[inline]
pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [aw, ax, ay, az] = a;
    let [bw, bx, by, bz] = b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

/// Matrix `L(a)` with `a ⊗ b = L(a) b`.
#[inline]
pub(crate) fn quat_left_matrix(a: [f64; 4]) -> Matrix4<f64> {
    let [w, x, y, z] = a;
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, -z, y, //
        y, z, w, -x, //
        z, -y, x, w,
    )
}

/// Rotation matrix of a unit quaternion (polynomial form).
#[inline]
pub fn quat_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back onto the quaternion
/// components of [`quat_to_matrix`].
pub(crate) fn quat_to_matrix_backward(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = q;
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(
        0.0,
        2.0 * y,
        2.0 * z,
        2.0 * y,
        -4.0 * x,
        -2.0 * w,
        2.0 * z,
        2.0 * w,
        -4.0 * x,
    );
    let dy = Matrix3::new(
        -4.0 * y,
        2.0 * x,
        2.0 * w,
        2.0 * x,
        0.0,
        2.0 * z,
        -2.0 * w,
        2.0 * z,
        -4.0 * y,
    );
    let dz = Matrix3::new(
        -4.0 * z,
        -2.0 * w,
        2.0 * x,
        2.0 * w,
        -4.0 * z,
        2.0 * y,
        2.0 * x,
        2.0 * y,
        0.0,
    );
    [g.dot(&dw), g.dot(&dx), g.dot(&dy), g.dot(&dz)]
}

/// Gradient of `normalize(q)` pulled back to the raw `q`.
#[inline]
pub(crate) fn normalize_quat_backward(q: [f64; 4], g: [f64; 4]) -> [f64; 4] {
    let v = Vector4::from(q);
    let n = v.norm();
    let u = v / n;
    let g = Vector4::from(g);
    ((g - u * u.dot(&g)) / n).into()
}

fn frame_quat(frame: &TriangleFrame) -> [f64; 4] {
    let q = frame.rotation.quaternion();
    [q.w, q.i, q.j, q.k]
}

#[inline]
fn pose_one(
    frame: &TriangleFrame,
    mu: [f64; 3],
    log_scale: [f64; 3],
    rotation: [f64; 4],
    color: [f64; 3],
    opacity_logit: f64,
) -> ([f64; 3], [f64; 3], [f64; 4], [f64; 3], f64) {
    let k = frame.scale;
    let mu_w = frame.origin + k * (frame.basis * Vector3::from(mu));
    let scale = [
        k * log_scale[0].exp(),
        k * log_scale[1].exp(),
        k * log_scale[2].exp(),
    ];
    let rot = quat_mul(frame_quat(frame), normalize_quat(rotation));
    let color = [
        color[0].clamp(0.0, 1.0),
        color[1].clamp(0.0, 1.0),
        color[2].clamp(0.0, 1.0),
    ];
    (mu_w.into(), scale, rot, color, sigmoid(opacity_logit))
}

fn check_bindings(locals: &LocalGaussianSet, n_frames: usize) -> Result<()> {
    locals.validate()?;
    if let Some(&bad) = locals.binding_index.iter().find(|&&b| b as usize >= n_frames) {
        return Err(Error::IndexOutOfRange {
            what: "binding frames",
            index: bad as usize,
            len: n_frames,
        });
    }
    Ok(())
}

const POSE_CHUNK: usize = 4096;

/// Poses every Gaussian rigidly with its bound frame.
pub fn pose_gaussians(locals: &LocalGaussianSet, frames: &[TriangleFrame]) -> Result<WorldGaussianSet> {
    check_bindings(locals, frames.len())?;
    let n = locals.len();
    let mut out = WorldGaussianSet {
        mu: vec![[0.0; 3]; n],
        scale: vec![[0.0; 3]; n],
        rotation: vec![[0.0; 4]; n],
        color: vec![[0.0; 3]; n],
        alpha: vec![0.0; n],
    };
    out.mu
        .par_chunks_mut(POSE_CHUNK)
        .zip(out.scale.par_chunks_mut(POSE_CHUNK))
        .zip(out.rotation.par_chunks_mut(POSE_CHUNK))
        .zip(out.color.par_chunks_mut(POSE_CHUNK))
        .zip(out.alpha.par_chunks_mut(POSE_CHUNK))
        .enumerate()
        .for_each(|(chunk, ((((mu, scale), rot), color), alpha))| {
            let base = chunk * POSE_CHUNK;
            for j in 0..alpha.len() {
                let i = base + j;
                let frame = &frames[locals.binding_index[i] as usize];
                let (m, s, r, c, a) = pose_one(
                    frame,
                    locals.mu[i],
                    locals.log_scale[i],
                    locals.rotation[i],
                    locals.color[i],
                    locals.opacity_logit[i],
                );
                mu[j] = m;
                scale[j] = s;
                rot[j] = r;
                color[j] = c;
                alpha[j] = a;
            }
        });
    Ok(out)
}

/// Gradients with respect to world-space attributes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldGradients {
    pub mu: Vec<[f64; 3]>,
    pub scale: Vec<[f64; 3]>,
    /// Ambient gradient on the (unit) world quaternion.
    pub rotation: Vec<[f64; 4]>,
    pub color: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

impl WorldGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            mu: vec![[0.0; 3]; n],
            scale: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            color: vec![[0.0; 3]; n],
            alpha: vec![0.0; n],
        }
    }
}

/// Chain rule from world-space gradients back to the local parameters.
/// Frames are treated as constants.
pub fn pose_gaussians_backward(
    locals: &LocalGaussianSet,
    frames: &[TriangleFrame],
    world: &WorldGaussianSet,
    grads: &WorldGradients,
) -> Result<LocalGradients> {
    check_bindings(locals, frames.len())?;
    let n = locals.len();
    ensure_len("world gradients", n, grads.alpha.len())?;
    let mut out = LocalGradients::zeros(n);
    for i in 0..n {
        let frame = &frames[locals.binding_index[i] as usize];
        let k = frame.scale;
        let g_mu = frame.basis.transpose() * Vector3::from(grads.mu[i]) * k;
        out.mu[i] = g_mu.into();
        for a in 0..3 {
            out.log_scale[i][a] = grads.scale[i][a] * world.scale[i][a];
        }
        let g_unit = quat_left_matrix(frame_quat(frame)).transpose() * Vector4::from(grads.rotation[i]);
        out.rotation[i] = normalize_quat_backward(locals.rotation[i], g_unit.into());
        for a in 0..3 {
            let c = locals.color[i][a];
            out.color[i][a] = if (0.0..=1.0).contains(&c) {
                grads.color[i][a]
            } else {
                0.0
            };
        }
        let alpha = world.alpha[i];
        out.opacity_logit[i] = grads.alpha[i] * alpha * (1.0 - alpha);
    }
    Ok(out)
}
