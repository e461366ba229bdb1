//! Structural similarity with a Gaussian window (valid positions only) and
//! its analytic gradient with respect to the prediction.

use crate::error::{Error, Result};
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Valid separable correlation of a `w`×`h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|a| k[a] * src[y * w + x + a]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|b| k[b] * rows[(y + b) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an `ow`×`oh` map back to `w`×`h`.
fn filter_adjoint(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut cols = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for b in 0..SSIM_WINDOW {
                cols[(y + b) * ow + x] += k[b] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = cols[y * ow + x];
            for a in 0..SSIM_WINDOW {
                out[y * w + x + a] += k[a] * v;
            }
        }
    }
    out
}

/// Mean SSIM over valid window positions and channels, plus its gradient
/// with respect to `pred`.
pub fn ssim(pred: &Image, target: &Image) -> Result<(f64, Image)> {
    if !pred.same_shape(target) {
        return Err(Error::DimensionMismatch {
            what: "ssim images",
            expected: pred.data().len(),
            got: target.data().len(),
        });
    }
    let (w, h, ch) = (pred.width(), pred.height(), pred.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs images at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {w}×{h}"
        )));
    }
    let k = kernel();
    let n_pos = ((w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW)) as f64;
    let scale = 1.0 / (n_pos * ch as f64);
    let mut total = 0.0;
    let mut grad = Image::new(w, h, ch);
    for c in 0..ch {
        let x = pred.channel(c).into_vec();
        let y = target.channel(c).into_vec();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let exx = filter_valid(&xx, w, h, &k);
        let eyy = filter_valid(&yy, w, h, &k);
        let exy = filter_valid(&xy, w, h, &k);
        let m = mx.len();
        let (mut ga, mut gb, mut gc) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for i in 0..m {
            let (ux, uy) = (mx[i], my[i]);
            let sxx = exx[i] - ux * ux;
            let syy = eyy[i] - uy * uy;
            let sxy = exy[i] - ux * uy;
            let n1 = 2.0 * ux * uy + C1;
            let n2 = 2.0 * sxy + C2;
            let d1 = ux * ux + uy * uy + C1;
            let d2 = sxx + syy + C2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            let ds_dux = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
            let ds_dsxx = -s / d2;
            let ds_dsxy = 2.0 * n1 / (d1 * d2);
            // chain through sxx = E[x²] − ux², sxy = E[xy] − ux·uy
            ga[i] = scale * (ds_dux - 2.0 * ux * ds_dsxx - uy * ds_dsxy);
            gb[i] = scale * ds_dsxx;
            gc[i] = scale * ds_dsxy;
        }
        let ta = filter_adjoint(&ga, w, h, &k);
        let tb = filter_adjoint(&gb, w, h, &k);
        let tc = filter_adjoint(&gc, w, h, &k);
        for p in 0..w * h {
            let g = ta[p] + 2.0 * x[p] * tb[p] + y[p] * tc[p];
            grad.data_mut()[p * ch + c] = g;
        }
    }
    Ok((total * scale, grad))
}
