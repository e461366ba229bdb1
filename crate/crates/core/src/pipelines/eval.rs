//! Image metrics of an avatar against held-out views.

use serde::{Deserialize, Serialize};

use super::views::{view_frames, View};
use crate::error::{Error, Result};
use crate::geometry::{Binding, ToyHeadModel};
use crate::renderer::{render, LocalGaussianSet, RasterSettings};
use crate::training::{l1_loss, psnr, ssim};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean: ViewMetrics,
}

impl EvalReport {
    pub fn from_views(views: Vec<ViewMetrics>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidArgument("no views to evaluate".into()));
        }
        let n = views.len() as f64;
        let mean = ViewMetrics {
            psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
            ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
            l1: views.iter().map(|v| v.l1).sum::<f64>() / n,
        };
        Ok(Self { views, mean })
    }
}

pub fn image_metrics(pred: &crate::image::Image, truth: &crate::image::Image) -> Result<ViewMetrics> {
    Ok(ViewMetrics {
        psnr: psnr(pred, truth)?,
        ssim: ssim(pred, truth)?.0,
        l1: l1_loss(pred, truth)?.0,
    })
}

/// Renders `avatar` at every view and scores it against the view's images.
pub fn evaluate(
    model: &ToyHeadModel,
    avatar: &LocalGaussianSet,
    bindings: &[Binding],
    identity_coeffs: &[f64],
    views: &[View],
    settings: &RasterSettings,
) -> Result<EvalReport> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("held-out set is empty".into()));
    }
    let mut out = Vec::with_capacity(views.len());
    for v in views {
        let frames = view_frames(model, bindings, identity_coeffs, &v.expression_coeffs, &v.rigid)?;
        let r = render(avatar, &frames, &v.camera, settings)?;
        out.push(image_metrics(&r.target.rgb, &v.rgb)?);
    }
    EvalReport::from_views(out)
}
