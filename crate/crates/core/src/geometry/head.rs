//! Procedural toy head: a deformable lat-long sphere standing in for a
//! morphable face model.
//!
//! UV `u` runs around the head (0.5 faces +z), `v` runs from the chin-side
//! pole (0) to the crown (1). Seam and pole vertices are duplicated so the UV
//! atlas has no wrap-around triangles.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, Rigid, Texture};
use crate::error::{ensure_len, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadModelConfig {
    pub lat_bands: usize,
    pub lon_segments: usize,
    pub identity_dims: usize,
    pub expression_dims: usize,
    pub seed: u64,
}

impl Default for HeadModelConfig {
    fn default() -> Self {
        Self {
            lat_bands: 20,
            lon_segments: 40,
            identity_dims: 8,
            expression_dims: 6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyHeadModel {
    pub config: HeadModelConfig,
    pub base_vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub uvs: Vec<[f64; 2]>,
    /// `identity_basis[k][vertex]`
    pub identity_basis: Vec<Vec<[f64; 3]>>,
    /// `expression_basis[k][vertex]`
    pub expression_basis: Vec<Vec<[f64; 3]>>,
    /// Faces that may carry hair; displacement regularization is relaxed there.
    pub scalp_face_mask: Vec<bool>,
}

/// Per-identity parameters of the toy head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadIdentity {
    pub identity_coeffs: Vec<f64>,
    pub skin_color: [f64; 3],
    pub hair_color: [f64; 3],
    pub hair_length: f64,
}

const SKIN_LIGHT: [f64; 3] = [0.93, 0.78, 0.66];
const SKIN_DARK: [f64; 3] = [0.42, 0.28, 0.2];
const HAIR_DARK: [f64; 3] = [0.08, 0.06, 0.05];
const HAIR_LIGHT: [f64; 3] = [0.88, 0.74, 0.42];
const EYE_COLOR: [f64; 3] = [0.1, 0.12, 0.16];
const LIP_TINT: [f64; 3] = [0.72, 0.22, 0.24];

/// Unit direction on the sphere for a UV coordinate.
pub(crate) fn uv_direction(uv: [f64; 2]) -> Vector3<f64> {
    let lat = PI * (uv[1] - 0.5);
    let lon = 2.0 * PI * (uv[0] - 0.5);
    Vector3::new(lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos())
}

/// Latitude (as `v`) of the hairline at longitude `u` for a given hair length.
pub fn hairline_v(u: f64, hair_length: f64) -> f64 {
    let front = 0.5 * (1.0 + (2.0 * PI * (u - 0.5)).cos());
    let front_v = 0.74;
    let back_v = 0.62 - 0.32 * hair_length;
    back_v + (front_v - back_v) * front
}

pub fn hair_region(uv: [f64; 2], hair_length: f64) -> bool {
    uv[1] >= hairline_v(uv[0], hair_length)
}

fn hair_thickness(hair_length: f64) -> f64 {
    0.04 + 0.1 * hair_length
}

fn base_shape(d: Vector3<f64>) -> Vector3<f64> {
    let nose_dir = uv_direction([0.5, 0.47]);
    let nose = 0.12 * (-(d - nose_dir).norm_squared() / 0.012).exp();
    let ellipsoid = Vector3::new(0.82 * d.x, 1.0 * d.y, 0.92 * d.z);
    ellipsoid + d * nose
}

fn radial_features(d: Vector3<f64>) -> [f64; 8] {
    [
        d.x,
        d.y,
        d.z,
        d.x * d.y,
        d.y * d.z,
        d.z * d.x,
        d.x * d.x - d.z * d.z,
        3.0 * d.y * d.y - 1.0,
    ]
}

impl ToyHeadModel {
    pub fn new(config: HeadModelConfig) -> Self {
        let lat = config.lat_bands.max(2);
        let lon = config.lon_segments.max(3);
        let mut uvs = Vec::new();
        for i in 1..lat {
            for j in 0..=lon {
                uvs.push([j as f64 / lon as f64, i as f64 / lat as f64]);
            }
        }
        let ring = |i: usize, j: usize| ((i - 1) * (lon + 1) + j) as u32;
        let bottom = uvs.len();
        for j in 0..lon {
            uvs.push([(j as f64 + 0.5) / lon as f64, 0.0]);
        }
        let top = uvs.len();
        for j in 0..lon {
            uvs.push([(j as f64 + 0.5) / lon as f64, 1.0]);
        }

        // Counter-clockwise in UV, which is counter-clockwise seen from outside.
        let mut faces = Vec::new();
        for j in 0..lon {
            faces.push([(bottom + j) as u32, ring(1, j + 1), ring(1, j)]);
        }
        for i in 1..lat - 1 {
            for j in 0..lon {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j + 1), ring(i + 1, j));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        for j in 0..lon {
            faces.push([ring(lat - 1, j), ring(lat - 1, j + 1), (top + j) as u32]);
        }

        let dirs: Vec<Vector3<f64>> = uvs.iter().map(|&uv| uv_direction(uv)).collect();
        let base_vertices = dirs.iter().map(|&d| base_shape(d).into()).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let identity_basis = (0..config.identity_dims)
            .map(|_| {
                let c: Vec<f64> = (0..8)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) / 8f64.sqrt())
                    .collect();
                dirs.iter()
                    .map(|&d| {
                        let r: f64 = radial_features(d).iter().zip(&c).map(|(f, c)| f * c).sum();
                        (d * (0.06 * r)).into()
                    })
                    .collect()
            })
            .collect();

        let mouth = uv_direction([0.5, 0.36]);
        let expression_basis = (0..config.expression_dims)
            .map(|k| {
                let a = if k == 0 {
                    Vector3::new(0.0, -1.0, 0.3).normalize()
                } else {
                    Vector3::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    )
                    .normalize()
                };
                dirs.iter()
                    .map(|&d| {
                        let w = (-(d - mouth).norm_squared() / 0.12).exp();
                        (a * (0.07 * w)).into()
                    })
                    .collect()
            })
            .collect();

        let margin = 0.5 / lat as f64;
        let scalp_face_mask = faces
            .iter()
            .map(|f| {
                let c = f.iter().fold([0.0, 0.0], |acc, &i| {
                    let uv = uvs[i as usize];
                    [acc[0] + uv[0] / 3.0, acc[1] + uv[1] / 3.0]
                });
                c[1] >= hairline_v(c[0], 1.0) - margin
            })
            .collect();

        Self {
            config,
            base_vertices,
            faces,
            uvs,
            identity_basis,
            expression_basis,
            scalp_face_mask,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.base_vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn identity_dims(&self) -> usize {
        self.identity_basis.len()
    }

    pub fn expression_dims(&self) -> usize {
        self.expression_basis.len()
    }

    /// Deformed and rigidly placed head surface, without hair.
    pub fn pose_head(
        &self,
        identity_coeffs: &[f64],
        expression_coeffs: &[f64],
        rigid: &Rigid,
    ) -> Result<Mesh> {
        let local = self.deform(identity_coeffs, expression_coeffs)?;
        Ok(Mesh {
            vertices: local
                .into_iter()
                .map(|p| rigid.apply(p).into())
                .collect(),
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        })
    }

    /// Posed surface including the hair shell: vertices inside the identity's
    /// hair region are pushed outward. This is what ground-truth images show;
    /// fitting only ever sees [`ToyHeadModel::pose_head`].
    pub fn ground_truth_mesh(
        &self,
        identity: &HeadIdentity,
        expression_coeffs: &[f64],
        rigid: &Rigid,
    ) -> Result<Mesh> {
        let mut local = self.deform(&identity.identity_coeffs, expression_coeffs)?;
        let thickness = hair_thickness(identity.hair_length);
        for (p, &uv) in local.iter_mut().zip(&self.uvs) {
            if hair_region(uv, identity.hair_length) {
                *p += uv_direction(uv) * thickness;
            }
        }
        Ok(Mesh {
            vertices: local
                .into_iter()
                .map(|p| rigid.apply(p).into())
                .collect(),
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        })
    }

    fn deform(&self, identity_coeffs: &[f64], expression_coeffs: &[f64]) -> Result<Vec<Vector3<f64>>> {
        ensure_len("identity coefficients", self.identity_dims(), identity_coeffs.len())?;
        ensure_len("expression coefficients", self.expression_dims(), expression_coeffs.len())?;
        let mut out: Vec<Vector3<f64>> = self.base_vertices.iter().map(|&v| v.into()).collect();
        for (basis, &c) in self
            .identity_basis
            .iter()
            .zip(identity_coeffs)
            .chain(self.expression_basis.iter().zip(expression_coeffs))
        {
            if c == 0.0 {
                continue;
            }
            for (p, b) in out.iter_mut().zip(basis) {
                *p += Vector3::from(*b) * c;
            }
        }
        Ok(out)
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Draws identity parameters deterministically from `seed`.
pub fn sample_identity(seed: u64, model: &ToyHeadModel) -> HeadIdentity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d3a_5eed);
    let identity_coeffs = (0..model.identity_dims())
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let skin_color = lerp3(SKIN_LIGHT, SKIN_DARK, rng.random::<f64>());
    let mut hair_color = lerp3(HAIR_DARK, HAIR_LIGHT, rng.random::<f64>());
    // occasional red tint
    let red = rng.random::<f64>() * 0.3;
    hair_color[0] = (hair_color[0] + red).min(1.0);
    let hair_length = rng.random::<f64>();
    HeadIdentity {
        identity_coeffs,
        skin_color,
        hair_color,
        hair_length,
    }
}

/// Flat albedo of a toy head: skin, hair above the hairline, eyes and lips.
pub struct HeadTexture<'a> {
    pub identity: &'a HeadIdentity,
}

impl Texture for HeadTexture<'_> {
    fn albedo(&self, uv: [f64; 2]) -> [f64; 3] {
        let id = self.identity;
        if hair_region(uv, id.hair_length) {
            return id.hair_color;
        }
        let [u, v] = uv;
        for eye_u in [0.445, 0.555] {
            let du = (u - eye_u) / 0.025;
            let dv = (v - 0.56) / 0.028;
            if du * du + dv * dv <= 1.0 {
                return EYE_COLOR;
            }
        }
        let du = (u - 0.5) / 0.065;
        let dv = (v - 0.375) / 0.018;
        if du * du + dv * dv <= 1.0 {
            return lerp3(id.skin_color, LIP_TINT, 0.6);
        }
        id.skin_color
    }
}
