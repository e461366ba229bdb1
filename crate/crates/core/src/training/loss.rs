//! Photometric, mask and regularization losses with their gradients.

use serde::{Deserialize, Serialize};

use super::ssim::ssim;
use crate::error::{ensure_len, Error, Result};
use crate::image::Image;
use crate::renderer::{AttributeGroup, LocalGaussianSet, LocalGradients, RenderTarget};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_pix: f64,
    pub lambda_l1: f64,
    pub lambda_ssim: f64,
    pub lambda_alpha: f64,
    pub lambda_percep: f64,
    pub lambda_sigma: f64,
    pub lambda_mu: f64,
    pub lambda_prior: f64,
    pub scale_threshold: f64,
    pub scalp_mu_factor: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_pix: 1.0,
            lambda_l1: 0.8,
            lambda_ssim: 0.2,
            lambda_alpha: 0.1,
            lambda_percep: 0.0,
            lambda_sigma: 1.0,
            lambda_mu: 1.0,
            lambda_prior: 0.1,
            scale_threshold: 0.6,
            scalp_mu_factor: 0.01,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda_pix: 0.0,
            lambda_l1: 0.0,
            lambda_ssim: 0.0,
            lambda_alpha: 0.0,
            lambda_percep: 0.0,
            lambda_sigma: 0.0,
            lambda_mu: 0.0,
            lambda_prior: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_pix,
            self.lambda_l1,
            self.lambda_ssim,
            self.lambda_alpha,
            self.lambda_percep,
            self.lambda_sigma,
            self.lambda_mu,
            self.lambda_prior,
            self.scalp_mu_factor,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("loss weights must be finite and non-negative".into()));
        }
        if !self.scale_threshold.is_finite() {
            return Err(Error::InvalidArgument("scale threshold must be finite".into()));
        }
        Ok(())
    }
}

fn check_shapes(a: &Image, b: &Image, what: &'static str) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected: a.data().len(),
            got: b.data().len(),
        })
    }
}

/// Mean absolute difference and its (sub)gradient with respect to `pred`.
pub fn l1_loss(pred: &Image, target: &Image) -> Result<(f64, Image)> {
    check_shapes(pred, target, "l1 images")?;
    let n = pred.data().len().max(1) as f64;
    let mut grad = Image::new(pred.width(), pred.height(), pred.channels());
    let mut sum = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        sum += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

/// `1 − SSIM` and its gradient.
pub fn ssim_loss(pred: &Image, target: &Image) -> Result<(f64, Image)> {
    let (s, mut g) = ssim(pred, target)?;
    g.data_mut().iter_mut().for_each(|v| *v = -*v);
    Ok((1.0 - s, g))
}

/// L1 between single-channel masks.
pub fn alpha_loss(pred_alpha: &Image, target_alpha: &Image) -> Result<(f64, Image)> {
    if pred_alpha.channels() != 1 {
        return Err(Error::InvalidArgument("alpha loss expects single-channel images".into()));
    }
    l1_loss(pred_alpha, target_alpha)
}

/// Scale and displacement regularizer. Each Gaussian contributes
/// `λσ·‖max(t, exp(log_scale))‖ + λμᵢ·‖μ′‖`, averaged over Gaussians, with
/// `λμᵢ` reduced on scalp Gaussians.
pub fn reg_loss(locals: &LocalGaussianSet, scalp_mask: &[bool], w: &LossWeights) -> Result<(f64, LocalGradients)> {
    ensure_len("scalp mask", locals.len(), scalp_mask.len())?;
    let n = locals.len();
    let mut grads = LocalGradients::zeros(n);
    if n == 0 {
        return Ok((0.0, grads));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let s = locals.log_scale[i].map(f64::exp);
        let clamped = s.map(|v| v.max(w.scale_threshold));
        let norm = clamped.iter().map(|v| v * v).sum::<f64>().sqrt();
        total += w.lambda_sigma * norm;
        if norm > 0.0 {
            for a in 0..3 {
                if s[a] > w.scale_threshold {
                    // d‖c‖/dc · dc/ds · ds/dlog
                    grads.log_scale[i][a] = w.lambda_sigma * inv_n * clamped[a] / norm * s[a];
                }
            }
        }
        let lambda_mu = if scalp_mask[i] {
            w.lambda_mu * w.scalp_mu_factor
        } else {
            w.lambda_mu
        };
        let mu = locals.mu[i];
        let mnorm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        total += lambda_mu * mnorm;
        if mnorm > 0.0 {
            for a in 0..3 {
                grads.mu[i][a] = lambda_mu * inv_n * mu[a] / mnorm;
            }
        }
    }
    Ok((total * inv_n, grads))
}

/// Mean over Gaussians of the squared distance to `anchor`, summed over
/// attribute groups. Unweighted.
pub fn prior_reg_loss(current: &LocalGaussianSet, anchor: &LocalGaussianSet) -> Result<(f64, LocalGradients)> {
    ensure_len("prior anchor", current.len(), anchor.len())?;
    let n = current.len();
    let mut grads = LocalGradients::zeros(n);
    if n == 0 {
        return Ok((0.0, grads));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for g in AttributeGroup::ALL {
        let (c, a) = (current.group(g), anchor.group(g));
        for ((out, x), y) in grads.group_mut(g).iter_mut().zip(c).zip(a) {
            let d = x - y;
            total += d * d;
            *out = 2.0 * d * inv_n;
        }
    }
    Ok((total * inv_n, grads))
}

/// Optional perceptual scorer. Returns a loss and its gradient with respect
/// to the predicted rgb image.
pub trait PerceptualScorer: Sync {
    fn score(&self, pred: &Image, target: &Image) -> Result<(f64, Image)>;
}

/// Inputs shared by every evaluation of [`total_loss`] beyond the render.
pub struct LossContext<'a> {
    pub weights: &'a LossWeights,
    pub scalp_mask: &'a [bool],
    /// Frozen attributes for the prior regularizer, if active.
    pub anchor: Option<&'a LocalGaussianSet>,
    pub perceptual: Option<&'a dyn PerceptualScorer>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub l1: f64,
    pub ssim: f64,
    pub alpha: f64,
    pub percep: f64,
    pub reg: f64,
    pub prior: f64,
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub total: f64,
    pub parts: LossParts,
    pub d_rgb: Image,
    pub d_alpha: Image,
    /// Gradient of the regularizers with respect to the local attributes.
    pub d_locals: LocalGradients,
}

impl LossOutput {
    /// Weighted image-space part, `λpix·Lpix + λpercep·Lpercep`.
    pub fn image_term(&self, w: &LossWeights) -> f64 {
        w.lambda_pix * (w.lambda_l1 * self.parts.l1 + w.lambda_ssim * self.parts.ssim) + w.lambda_percep * self.parts.percep
    }
}

/// Full objective on one rendered view.
pub fn total_loss(
    render: &RenderTarget,
    truth_rgb: &Image,
    truth_alpha: &Image,
    locals: &LocalGaussianSet,
    ctx: &LossContext<'_>,
) -> Result<LossOutput> {
    let w = ctx.weights;
    w.validate()?;
    let (w_, h_) = (render.width(), render.height());
    let mut d_rgb = Image::new(w_, h_, 3);
    let mut d_alpha = Image::new(w_, h_, 1);
    let mut parts = LossParts::default();
    let mut total = 0.0;

    let add = |dst: &mut Image, src: &Image, s: f64| {
        for (a, b) in dst.data_mut().iter_mut().zip(src.data()) {
            *a += s * b;
        }
    };

    let (l1, g) = l1_loss(&render.rgb, truth_rgb)?;
    parts.l1 = l1;
    let s = w.lambda_pix * w.lambda_l1;
    total += s * l1;
    add(&mut d_rgb, &g, s);

    let s = w.lambda_pix * w.lambda_ssim;
    if s > 0.0 {
        let (l, g) = ssim_loss(&render.rgb, truth_rgb)?;
        parts.ssim = l;
        total += s * l;
        add(&mut d_rgb, &g, s);
    }

    let (la, g) = alpha_loss(&render.alpha, truth_alpha)?;
    parts.alpha = la;
    total += w.lambda_alpha * la;
    add(&mut d_alpha, &g, w.lambda_alpha);

    if let (Some(scorer), true) = (ctx.perceptual, w.lambda_percep > 0.0) {
        let (l, g) = scorer.score(&render.rgb, truth_rgb)?;
        check_shapes(&render.rgb, &g, "perceptual gradient")?;
        parts.percep = l;
        total += w.lambda_percep * l;
        add(&mut d_rgb, &g, w.lambda_percep);
    }

    let (reg, mut d_locals) = reg_loss(locals, ctx.scalp_mask, w)?;
    parts.reg = reg;
    total += reg;

    if let Some(anchor) = ctx.anchor {
        let (p, g) = prior_reg_loss(locals, anchor)?;
        parts.prior = p;
        total += w.lambda_prior * p;
        d_locals.add_scaled(&g, w.lambda_prior);
    }

    Ok(LossOutput {
        total,
        parts,
        d_rgb,
        d_alpha,
        d_locals,
    })
}

/// Peak signal-to-noise ratio for images in [0, 1], capped at 99 dB.
pub fn psnr(pred: &Image, target: &Image) -> Result<f64> {
    check_shapes(pred, target, "psnr images")?;
    let n = pred.data().len().max(1) as f64;
    let mse = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    if mse <= 1e-10 {
        return Ok(99.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(99.0))
}
