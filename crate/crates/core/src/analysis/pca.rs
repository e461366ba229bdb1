use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::geometry::{Binding, Mesh};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaResult {
    pub mean: Array1<f64>,
    /// One orthonormal component per row.
    pub components: Array2<f64>,
    /// Descending.
    pub variances: Array1<f64>,
    /// Rows are samples, columns components.
    pub projections: Array2<f64>,
}

impl PcaResult {
    /// Maps projections back to the input space.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.projections.dot(&self.components) + self.mean.view().insert_axis(ndarray::Axis(0))
    }
}

/// Principal components of the rows of `data`. The largest-magnitude entry of
/// every component is made positive.
pub fn pca_features(data: ArrayView2<'_, f64>, k: usize) -> Result<PcaResult> {
    let (n, d) = data.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("pca needs at least two samples".into()));
    }
    if k == 0 || k > d {
        return Err(Error::IndexOutOfRange {
            what: "pca components",
            index: k,
            len: d + 1,
        });
    }
    let mean = data.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let centered = &data - &mean.view().insert_axis(ndarray::Axis(0));
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let m = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Array2::zeros((k, d));
    let mut variances = Array1::zeros(k);
    for (r, &c) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(c);
        let big = (0..d).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).expect("d > 0");
        let sign = if col[big] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[r, j]] = sign * col[j];
        }
        variances[r] = eig.eigenvalues[c].max(0.0);
    }
    let projections = centered.dot(&components.t());
    Ok(PcaResult {
        mean,
        components,
        variances,
        projections,
    })
}

/// Paints the first three projections as RGB at each Gaussian's UV position.
/// Each channel is min-max normalized; unpainted texels stay black.
pub fn pca_uv_image(pca: &PcaResult, mesh: &Mesh, bindings: &[Binding], size: usize) -> Result<Image> {
    let (n, k) = pca.projections.dim();
    if n != bindings.len() {
        return Err(Error::DimensionMismatch {
            what: "pca projections vs bindings",
            expected: bindings.len(),
            got: n,
        });
    }
    if size == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for c in 0..k.min(3) {
        let col = pca.projections.column(c);
        lo[c] = col.iter().copied().fold(f64::INFINITY, f64::min);
        hi[c] = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let mut img = Image::new(size, size, 3);
    for (i, b) in bindings.iter().enumerate() {
        let face = b.face as usize;
        if face >= mesh.faces.len() {
            return Err(Error::IndexOutOfRange {
                what: "binding face",
                index: face,
                len: mesh.faces.len(),
            });
        }
        let uv = mesh.face_uvs(face);
        let w = b.barycentric;
        let u = w[0] * uv[0][0] + w[1] * uv[1][0] + w[2] * uv[2][0];
        let v = w[0] * uv[0][1] + w[1] * uv[1][1] + w[2] * uv[2][1];
        let x = ((u * size as f64) as usize).min(size - 1);
        let y = (((1.0 - v) * size as f64) as usize).min(size - 1);
        for c in 0..3 {
            let val = if c < k && hi[c] > lo[c] {
                (pca.projections[[i, c]] - lo[c]) / (hi[c] - lo[c])
            } else {
                0.5
            };
            img.set(x, y, c, val);
        }
    }
    Ok(img)
}
