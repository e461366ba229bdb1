use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::frame::{compute_triangle_frame, TriangleFrame};
use super::mesh::Mesh;
use crate::error::{Error, Result};

/// Attachment of one Gaussian to a point on a mesh face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub face: u32,
    pub barycentric: [f64; 3],
}

impl Binding {
    pub fn new(face: u32, barycentric: [f64; 3]) -> Self {
        Self { face, barycentric }
    }
}

/// Tolerance for a texel center lying on a UV triangle edge.
const EDGE_EPS: f64 = 1e-12;

/// One binding per UV texel whose center lies inside a face's UV triangle.
///
/// Texels are visited row-major (v outer, u inner). Where UV triangles
/// overlap, the lowest face index claims the texel.
pub fn build_bindings_from_uv(mesh: &Mesh, resolution: usize) -> Result<Vec<Binding>> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("uv resolution must be >= 1".into()));
    }
    mesh.validate()?;
    let res = resolution as f64;
    let mut slots: Vec<Option<Binding>> = vec![None; resolution * resolution];

    for face in 0..mesh.faces.len() {
        let uv = mesh.face_uvs(face);
        let Some(bary) = UvTriangle::new(uv) else {
            continue;
        };
        let (umin, umax) = min_max(uv.iter().map(|p| p[0]));
        let (vmin, vmax) = min_max(uv.iter().map(|p| p[1]));
        // texel t covers [t/res, (t+1)/res), center at (t + 0.5)/res
        let lo = |x: f64| ((x * res - 0.5).ceil().max(0.0)) as usize;
        let hi = |x: f64| ((x * res - 0.5).floor().min(res - 1.0)).max(-1.0) as isize;
        let (tx0, tx1) = (lo(umin), hi(umax));
        let (ty0, ty1) = (lo(vmin), hi(vmax));
        if tx1 < 0 || ty1 < 0 {
            continue;
        }
        for ty in ty0..=ty1 as usize {
            let v = (ty as f64 + 0.5) / res;
            for tx in tx0..=tx1 as usize {
                let slot = &mut slots[ty * resolution + tx];
                if slot.is_some() {
                    continue;
                }
                let u = (tx as f64 + 0.5) / res;
                if let Some(b) = bary.coords([u, v]) {
                    *slot = Some(Binding::new(face as u32, b));
                }
            }
        }
    }
    Ok(slots.into_iter().flatten().collect())
}

struct UvTriangle {
    a: [f64; 2],
    e1: [f64; 2],
    e2: [f64; 2],
    inv_det: f64,
}

impl UvTriangle {
    fn new(uv: [[f64; 2]; 3]) -> Option<Self> {
        let e1 = [uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]];
        let e2 = [uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]];
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        if det.abs() < 1e-18 {
            return None;
        }
        Some(Self {
            a: uv[0],
            e1,
            e2,
            inv_det: 1.0 / det,
        })
    }

    /// Barycentric coordinates of `p`, or `None` when outside.
    fn coords(&self, p: [f64; 2]) -> Option<[f64; 3]> {
        let d = [p[0] - self.a[0], p[1] - self.a[1]];
        let b1 = (d[0] * self.e2[1] - d[1] * self.e2[0]) * self.inv_det;
        let b2 = (self.e1[0] * d[1] - self.e1[1] * d[0]) * self.inv_det;
        let b0 = 1.0 - b1 - b2;
        if b0 < -EDGE_EPS || b1 < -EDGE_EPS || b2 < -EDGE_EPS {
            return None;
        }
        let b = [b0.max(0.0), b1.max(0.0), b2.max(0.0)];
        let s = b[0] + b[1] + b[2];
        Some([b[0] / s, b[1] / s, b[2] / s])
    }
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    })
}

pub fn binding_world_origin(mesh: &Mesh, binding: &Binding) -> Result<Vector3<f64>> {
    let face = binding.face as usize;
    if face >= mesh.faces.len() {
        return Err(Error::IndexOutOfRange {
            what: "mesh faces",
            index: face,
            len: mesh.faces.len(),
        });
    }
    let [v0, v1, v2] = mesh.face_vertices(face);
    let [a, b, c] = binding.barycentric;
    Ok(v0 * a + v1 * b + v2 * c)
}

/// Per-binding frames: the bound face's orientation and scale, with the
/// origin moved to the binding's barycentric point.
pub fn binding_frames(mesh: &Mesh, bindings: &[Binding]) -> Result<Vec<TriangleFrame>> {
    let mut cache: Vec<Option<TriangleFrame>> = vec![None; mesh.faces.len()];
    bindings
        .iter()
        .map(|b| {
            let face = b.face as usize;
            let origin = binding_world_origin(mesh, b)?;
            let frame = match cache[face] {
                Some(f) => f,
                None => {
                    let f = compute_triangle_frame(mesh, face)?;
                    cache[face] = Some(f);
                    f
                }
            };
            Ok(TriangleFrame { origin, ..frame })
        })
        .collect()
}
