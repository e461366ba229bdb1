//! Classical z-buffered triangle rasterizer with perspective-correct UVs.

use nalgebra::Vector3;

use crate::geometry::{Mesh, Texture};
use crate::image::Image;
use crate::renderer::Camera;

/// Renders `mesh` with flat (unlit) albedo from `texture`. Covered pixels
/// get alpha 1; the background is black with alpha 0. Triangles with any
/// vertex in front of the near plane are dropped.
pub fn render_ground_truth(mesh: &Mesh, texture: &impl Texture, cam: &Camera) -> (Image, Image) {
    let (w, h) = (cam.width, cam.height);
    let mut rgb = Image::new(w, h, 3);
    let mut alpha = Image::new(w, h, 1);
    let mut depth = vec![f64::INFINITY; w * h];

    let view: Vec<Vector3<f64>> = mesh.vertices.iter().map(|&v| cam.world_to_view(v.into())).collect();
    for (fi, face) in mesh.faces.iter().enumerate() {
        let idx = face.map(|i| i as usize);
        let vs = idx.map(|i| view[i]);
        if vs.iter().any(|v| v.z < cam.near || v.z <= 0.0) {
            continue;
        }
        let ps = vs.map(|v| cam.project_view(v));
        let uvs = mesh.face_uvs(fi);
        let area = edge(ps[0], ps[1], ps[2]);
        if area.abs() < 1e-14 {
            continue;
        }
        let min_x = ps.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = ps.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = ps.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_y = ps.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
        let y0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
        let x1 = (max_x - 0.5).floor().min(w as f64 - 1.0);
        let y1 = (max_y - 0.5).floor().min(h as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        let inv_z = vs.map(|v| 1.0 / v.z);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let p = [px as f64 + 0.5, py as f64 + 0.5];
                // screen-space barycentrics, sign-normalized by the area
                let b0 = edge(ps[1], ps[2], p) / area;
                let b1 = edge(ps[2], ps[0], p) / area;
                let b2 = edge(ps[0], ps[1], p) / area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let iz = b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2];
                let z = 1.0 / iz;
                let pix = py * w + px;
                if z >= depth[pix] {
                    continue;
                }
                depth[pix] = z;
                let wts = [b0 * inv_z[0] * z, b1 * inv_z[1] * z, b2 * inv_z[2] * z];
                let uv = [
                    wts[0] * uvs[0][0] + wts[1] * uvs[1][0] + wts[2] * uvs[2][0],
                    wts[0] * uvs[0][1] + wts[1] * uvs[1][1] + wts[2] * uvs[2][1],
                ];
                let c = texture.albedo(uv);
                rgb.data_mut()[3 * pix..3 * pix + 3].copy_from_slice(&c);
                alpha.data_mut()[pix] = 1.0;
            }
        }
    }
    (rgb, alpha)
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}
