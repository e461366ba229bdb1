use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::mesh::Mesh;
use crate::error::{Error, Result};

/// Faces with area at or below this (model units²) have no frame.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Local coordinate system of one triangle.
///
/// The basis columns are the normalized first edge (v0→v1), the face normal
/// and their cross product. `basis` always equals the matrix of `rotation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleFrame {
    pub origin: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub basis: Matrix3<f64>,
    pub scale: f64,
}

impl TriangleFrame {
    pub fn new(origin: Vector3<f64>, rotation: UnitQuaternion<f64>, scale: f64) -> Self {
        Self {
            origin,
            rotation,
            basis: rotation.to_rotation_matrix().into_inner(),
            scale,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity(), 1.0)
    }

    /// Maps a triangle-local point into world space.
    #[inline]
    pub fn to_world(&self, local: Vector3<f64>) -> Vector3<f64> {
        self.origin + self.scale * (self.basis * local)
    }
}

pub fn compute_triangle_frame(mesh: &Mesh, face: usize) -> Result<TriangleFrame> {
    if face >= mesh.faces.len() {
        return Err(Error::IndexOutOfRange {
            what: "mesh faces",
            index: face,
            len: mesh.faces.len(),
        });
    }
    let [v0, v1, v2] = mesh.face_vertices(face);
    frame_from_corners(face, v0, v1, v2)
}

pub(crate) fn frame_from_corners(
    face: usize,
    v0: Vector3<f64>,
    v1: Vector3<f64>,
    v2: Vector3<f64>,
) -> Result<TriangleFrame> {
    let edge = v1 - v0;
    let cross = edge.cross(&(v2 - v0));
    let twice_area = cross.norm();
    if twice_area * 0.5 <= MIN_FACE_AREA {
        return Err(Error::DegenerateFace {
            face,
            area: twice_area * 0.5,
        });
    }
    let edge_len = edge.norm();
    let e1 = edge / edge_len;
    let normal = cross / twice_area;
    let e3 = e1.cross(&normal);
    let basis = Matrix3::from_columns(&[e1, normal, e3]);
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(basis));
    // Height of v2 above the line through v0 and v1.
    let height = twice_area / edge_len;
    Ok(TriangleFrame {
        origin: (v0 + v1 + v2) / 3.0,
        rotation,
        basis,
        scale: 0.5 * (edge_len + height),
    })
}

/// Frames for every face of a mesh.
pub fn face_frames(mesh: &Mesh) -> Result<Vec<TriangleFrame>> {
    (0..mesh.faces.len())
        .map(|f| compute_triangle_frame(mesh, f))
        .collect()
}
