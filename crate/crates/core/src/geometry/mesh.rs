use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Triangle mesh with one UV coordinate per vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub uvs: Vec<[f64; 2]>,
}

impl Mesh {
    /// Builds a mesh after checking face indices and UV count.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>, uvs: Vec<[f64; 2]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            uvs,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::ensure_len("mesh uv count", self.vertices.len(), self.uvs.len())?;
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &i in f {
                if i as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "mesh vertices",
                        index: i as usize,
                        len: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidArgument(format!(
                    "face {fi} repeats a vertex index: {f:?}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.vertices[i])
    }

    /// The three posed corner positions of a face.
    #[inline]
    pub fn face_vertices(&self, face: usize) -> [Vector3<f64>; 3] {
        let f = self.faces[face];
        [
            self.vertex(f[0] as usize),
            self.vertex(f[1] as usize),
            self.vertex(f[2] as usize),
        ]
    }

    #[inline]
    pub fn face_uvs(&self, face: usize) -> [[f64; 2]; 3] {
        let f = self.faces[face];
        [
            self.uvs[f[0] as usize],
            self.uvs[f[1] as usize],
            self.uvs[f[2] as usize],
        ]
    }

    /// Applies a rigid transform to every vertex.
    pub fn transformed(&self, rigid: &Rigid) -> Mesh {
        let vertices = self
            .vertices
            .iter()
            .map(|&v| rigid.apply(Vector3::from(v)).into())
            .collect();
        Mesh {
            vertices,
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        }
    }
}

/// Rotation (unit quaternion, `[w, x, y, z]`) followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rigid {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Default for Rigid {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rigid {
    pub fn identity() -> Self {
        Self {
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
        }
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        let q = rotation.quaternion();
        Self {
            rotation: [q.w, q.i, q.j, q.k],
            translation: translation.into(),
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.quaternion().to_rotation_matrix().into_inner()
    }

    #[inline]
    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.quaternion() * p + Vector3::from(self.translation)
    }
}

/// Color as a function of surface UV.
pub trait Texture {
    fn albedo(&self, uv: [f64; 2]) -> [f64; 3];
}

impl<F: Fn([f64; 2]) -> [f64; 3]> Texture for F {
    fn albedo(&self, uv: [f64; 2]) -> [f64; 3] {
        self(uv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_face() {
        let err = Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]], vec![[0.0; 2]; 3]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { .. }));
    }

    #[test]
    fn rejects_repeated_index_and_uv_mismatch() {
        assert!(Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]], vec![[0.0; 2]; 3]).is_err());
        assert!(Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 2]], vec![[0.0; 2]; 2]).is_err());
    }
}
