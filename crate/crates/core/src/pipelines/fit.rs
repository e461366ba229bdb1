//! Three-stage fitting of a trained prior to enrollment images, plus the
//! direct-optimization baseline that ignores the prior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::views::{enrollment_frames, Enrollment};
use crate::error::{Error, Result};
use crate::geometry::{Binding, ToyHeadModel, TriangleFrame};
use crate::prior::{Decoder, PriorModel};
use crate::renderer::{render, render_backward, Camera, LocalGaussianSet, LocalGradients, RasterSettings};
use crate::synthdata::derive_seed;
use crate::training::{adam_step, total_loss, AdamState, GroupRates, LocalAdam, LossContext, LossWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub steps_stage1: usize,
    pub steps_stage2: usize,
    pub steps_stage3: usize,
    pub lr_code: f64,
    pub lr_decoder: f64,
    pub stage3_rates: GroupRates,
    /// Image and regularizer weights; `lambda_prior` weights the anchor term of
    /// stages 2 and 3.
    pub weights: LossWeights,
    /// Standard deviation of the random starting code.
    pub code_init_std: f64,
    /// Isotropic Gaussian scale the no-prior baseline starts from.
    pub baseline_init_scale: f64,
    pub tile_size: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps_stage1: 500,
            steps_stage2: 500,
            steps_stage3: 100,
            lr_code: 0.01,
            lr_decoder: 2e-4,
            stage3_rates: GroupRates::default(),
            weights: LossWeights::default(),
            code_init_std: 0.01,
            baseline_init_scale: 0.5,
            tile_size: crate::renderer::DEFAULT_TILE_SIZE,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.stage3_rates;
        let rates = [self.lr_code, self.lr_decoder, r.position, r.log_scale, r.rotation, r.color, r.opacity];
        if rates.iter().any(|x| !(*x >= 0.0)) || !(self.code_init_std >= 0.0) || !(self.baseline_init_scale > 0.0) {
            return Err(Error::InvalidArgument("fit rates must be non-negative".into()));
        }
        if self.tile_size == 0 {
            return Err(Error::InvalidArgument("tile size must be positive".into()));
        }
        self.weights.validate()
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    fn settings(&self) -> RasterSettings {
        RasterSettings {
            tile_size: self.tile_size,
            background: [0.0; 3],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub steps: usize,
    /// Enrollment objective before the first update.
    pub start_loss: f64,
    /// Objective of the returned parameters.
    pub end_loss: f64,
    /// Mean image L1 of the returned parameters.
    pub end_l1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code: Vec<f64>,
    pub stage1: StageReport,
    pub stage2: StageReport,
    pub stage3: StageReport,
    pub identity_coeffs: Vec<f64>,
    pub cameras: Vec<Camera>,
    pub expressions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedAvatar {
    pub avatar: LocalGaussianSet,
    pub bindings: Vec<Binding>,
    /// Stage-1 attributes the later stages are pulled toward.
    pub anchor: LocalGaussianSet,
    pub provenance: Provenance,
}

impl FittedAvatar {
    pub fn validate(&self) -> Result<()> {
        self.avatar.validate()?;
        if self.anchor.len() != self.avatar.len() || self.bindings.len() != self.avatar.len() {
            return Err(Error::DimensionMismatch {
                what: "fitted avatar anchor and bindings",
                expected: self.avatar.len(),
                got: self.anchor.len().min(self.bindings.len()),
            });
        }
        Ok(())
    }
}

/// Objective value, mean image L1 and gradient over all enrollment views.
struct Objective {
    loss: f64,
    l1: f64,
    grad: LocalGradients,
}

struct EnrollmentProblem<'a> {
    enrollment: &'a Enrollment,
    frames: Vec<Vec<TriangleFrame>>,
    scalp_mask: &'a [bool],
    settings: RasterSettings,
}

impl<'a> EnrollmentProblem<'a> {
    fn new(model: &ToyHeadModel, bindings: &[Binding], scalp_mask: &'a [bool], e: &'a Enrollment, cfg: &FitConfig) -> Result<Self> {
        e.validate()?;
        Ok(Self {
            enrollment: e,
            frames: enrollment_frames(model, bindings, e)?,
            scalp_mask,
            settings: cfg.settings(),
        })
    }

    fn evaluate(&self, avatar: &LocalGaussianSet, weights: &LossWeights, anchor: Option<&LocalGaussianSet>, step: usize) -> Result<Objective> {
        let ctx = LossContext {
            weights,
            scalp_mask: self.scalp_mask,
            anchor,
            perceptual: None,
        };
        let n = self.enrollment.views.len() as f64;
        let mut out = Objective {
            loss: 0.0,
            l1: 0.0,
            grad: avatar.zeros_like(),
        };
        for (v, frames) in self.enrollment.views.iter().zip(&self.frames) {
            let r = render(avatar, frames, &v.camera, &self.settings)?;
            let loss = total_loss(&r.target, &v.rgb, &v.alpha, avatar, &ctx)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: "enrollment objective".into(),
                });
            }
            let g = render_backward(avatar, frames, &r, &loss.d_rgb, &loss.d_alpha)?;
            out.grad.add_scaled(&g.local, 1.0 / n);
            out.grad.add_scaled(&loss.d_locals, 1.0 / n);
            out.loss += loss.total / n;
            out.l1 += loss.parts.l1 / n;
        }
        Ok(out)
    }
}

/// Keeps the lowest-objective parameters seen so far.
struct Best<T> {
    value: T,
    loss: f64,
    l1: f64,
}

impl<T: Clone> Best<T> {
    fn offer(&mut self, value: &T, obj: &Objective) {
        if obj.loss < self.loss {
            self.value = value.clone();
            self.loss = obj.loss;
            self.l1 = obj.l1;
        }
    }
}

fn random_code(prior: &PriorModel, cfg: &FitConfig) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 300, 0));
    let normal = Normal::new(0.0, cfg.code_init_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..prior.code_dim()).map(|_| normal.sample(&mut rng)).collect())
}

fn no_prior_weights(w: &LossWeights) -> LossWeights {
    LossWeights { lambda_prior: 0.0, ..w.clone() }
}

/// Optimizes a fresh random code with everything else frozen. Returns the
/// best code, the avatar it decodes to (the anchor) and a report.
pub fn fit_stage1_inversion(
    model: &ToyHeadModel,
    prior: &PriorModel,
    enrollment: &Enrollment,
    cfg: &FitConfig,
) -> Result<(Vec<f64>, LocalGaussianSet, StageReport)> {
    cfg.validate()?;
    let problem = EnrollmentProblem::new(model, &prior.bindings, &prior.scalp_mask, enrollment, cfg)?;
    let weights = no_prior_weights(&cfg.weights);
    let mut code = random_code(prior, cfg)?;
    let mut adam = AdamState::new(code.len(), cfg.lr_code);
    let mut best: Option<Best<Vec<f64>>> = None;
    let mut start = 0.0;
    for step in 0..=cfg.steps_stage1 {
        let (avatar, cache) = prior.decode_code(&code)?;
        let obj = problem.evaluate(&avatar, &weights, None, step)?;
        match best.as_mut() {
            None => {
                start = obj.loss;
                best = Some(Best { value: code.clone(), loss: obj.loss, l1: obj.l1 });
            }
            Some(b) => b.offer(&code, &obj),
        }
        if step == cfg.steps_stage1 {
            break;
        }
        let mut grad = prior.zero_gradients();
        prior.decode_backward(&cache, &obj.grad, &mut grad)?;
        adam_step(&mut code, grad.code.as_slice().expect("contiguous"), &mut adam)?;
    }
    let best = best.expect("at least one evaluation");
    let anchor = prior.decode_code(&best.value)?.0;
    let report = StageReport {
        steps: cfg.steps_stage1,
        start_loss: start,
        end_loss: best.loss,
        end_l1: best.l1,
    };
    Ok((best.value, anchor, report))
}

/// Fine-tunes a copy of the decoder for a fixed code, pulled toward the
/// anchor. Template, features and code stay untouched.
pub fn fit_stage2_finetune(
    model: &ToyHeadModel,
    prior: &PriorModel,
    code: &[f64],
    anchor: &LocalGaussianSet,
    enrollment: &Enrollment,
    cfg: &FitConfig,
) -> Result<(Decoder, StageReport)> {
    cfg.validate()?;
    let problem = EnrollmentProblem::new(model, &prior.bindings, &prior.scalp_mask, enrollment, cfg)?;
    let mut work = prior.clone();
    let mut states: Vec<AdamState> = work
        .decoder
        .tensors()
        .iter()
        .map(|t| AdamState::new(t.len(), cfg.lr_decoder))
        .collect();
    let mut best: Option<Best<Decoder>> = None;
    let mut start = 0.0;
    for step in 0..=cfg.steps_stage2 {
        let (avatar, cache) = work.decode_code(code)?;
        let obj = problem.evaluate(&avatar, &cfg.weights, Some(anchor), step)?;
        match best.as_mut() {
            None => {
                start = obj.loss;
                best = Some(Best { value: work.decoder.clone(), loss: obj.loss, l1: obj.l1 });
            }
            Some(b) => b.offer(&work.decoder, &obj),
        }
        if step == cfg.steps_stage2 {
            break;
        }
        let mut grad = work.zero_gradients();
        work.decode_backward(&cache, &obj.grad, &mut grad)?;
        for (s, (p, g)) in states
            .iter_mut()
            .zip(work.decoder.tensors_mut().into_iter().zip(grad.decoder.tensors()))
        {
            adam_step(p, g, s)?;
        }
    }
    let best = best.expect("at least one evaluation");
    let report = StageReport {
        steps: cfg.steps_stage2,
        start_loss: start,
        end_loss: best.loss,
        end_l1: best.l1,
    };
    Ok((best.value, report))
}

/// Direct per-Gaussian optimization with the anchor term; no decoder.
#[allow(clippy::too_many_arguments)]
pub fn fit_stage3_refine(
    model: &ToyHeadModel,
    bindings: &[Binding],
    scalp_mask: &[bool],
    avatar: &LocalGaussianSet,
    anchor: Option<&LocalGaussianSet>,
    enrollment: &Enrollment,
    cfg: &FitConfig,
    steps: usize,
) -> Result<(LocalGaussianSet, StageReport)> {
    cfg.validate()?;
    let problem = EnrollmentProblem::new(model, bindings, scalp_mask, enrollment, cfg)?;
    let weights = if anchor.is_some() { cfg.weights.clone() } else { no_prior_weights(&cfg.weights) };
    let mut current = avatar.clone();
    let mut adam = LocalAdam::new(current.len(), &cfg.stage3_rates);
    let mut best: Option<Best<LocalGaussianSet>> = None;
    let mut start = 0.0;
    for step in 0..=steps {
        let obj = problem.evaluate(&current, &weights, anchor, step)?;
        match best.as_mut() {
            None => {
                start = obj.loss;
                best = Some(Best { value: current.clone(), loss: obj.loss, l1: obj.l1 });
            }
            Some(b) => b.offer(&current, &obj),
        }
        if step == steps {
            break;
        }
        adam.step(&mut current, &obj.grad)?;
    }
    let best = best.expect("at least one evaluation");
    let report = StageReport {
        steps,
        start_loss: start,
        end_loss: best.loss,
        end_l1: best.l1,
    };
    Ok((best.value, report))
}

/// Rounds every attribute through f32 so the avatar file stores it exactly.
pub fn quantize_f32(avatar: &LocalGaussianSet) -> LocalGaussianSet {
    let mut out = avatar.clone();
    for g in crate::renderer::AttributeGroup::ALL {
        for x in out.group_mut(g) {
            *x = *x as f32 as f64;
        }
    }
    out
}

/// Inversion, decoder fine-tuning and per-Gaussian refinement in sequence.
pub fn fit(model: &ToyHeadModel, prior: &PriorModel, enrollment: &Enrollment, cfg: &FitConfig) -> Result<FittedAvatar> {
    let (code, anchor, stage1) = fit_stage1_inversion(model, prior, enrollment, cfg)?;
    let (decoder, stage2) = fit_stage2_finetune(model, prior, &code, &anchor, enrollment, cfg)?;
    let mut tuned = prior.clone();
    tuned.decoder = decoder;
    let decoded = tuned.decode_code(&code)?.0;
    let (refined, stage3) = fit_stage3_refine(
        model,
        &prior.bindings,
        &prior.scalp_mask,
        &decoded,
        Some(&anchor),
        enrollment,
        cfg,
        cfg.steps_stage3,
    )?;
    let fitted = FittedAvatar {
        avatar: quantize_f32(&refined),
        bindings: crate::io::quantize_bindings(&prior.bindings),
        anchor,
        provenance: Provenance {
            config_hash: cfg.hash(),
            code,
            stage1,
            stage2,
            stage3,
            identity_coeffs: enrollment.identity_coeffs.clone(),
            cameras: enrollment.views.iter().map(|v| v.camera.clone()).collect(),
            expressions: enrollment.views.iter().map(|v| v.expression_coeffs.clone()).collect(),
        },
    };
    fitted.validate()?;
    Ok(fitted)
}

/// Baseline without a learned prior: the untrained template optimized
/// directly for as many steps as all three stages combined.
pub fn fit_without_prior(
    model: &ToyHeadModel,
    prior: &PriorModel,
    enrollment: &Enrollment,
    cfg: &FitConfig,
) -> Result<FittedAvatar> {
    let mut start = LocalGaussianSet::with_capacity(prior.len());
    let log_scale = cfg.baseline_init_scale.ln();
    for i in 0..prior.len() {
        start.push([0.0; 3], [log_scale; 3], [1.0, 0.0, 0.0, 0.0], [0.5; 3], 0.0, i as u32);
    }
    let steps = cfg.steps_stage1 + cfg.steps_stage2 + cfg.steps_stage3;
    let (refined, stage3) = fit_stage3_refine(
        model,
        &prior.bindings,
        &prior.scalp_mask,
        &start,
        None,
        enrollment,
        cfg,
        steps,
    )?;
    let fitted = FittedAvatar {
        avatar: quantize_f32(&refined),
        bindings: crate::io::quantize_bindings(&prior.bindings),
        anchor: start,
        provenance: Provenance {
            config_hash: cfg.hash(),
            stage3,
            identity_coeffs: enrollment.identity_coeffs.clone(),
            cameras: enrollment.views.iter().map(|v| v.camera.clone()).collect(),
            expressions: enrollment.views.iter().map(|v| v.expression_coeffs.clone()).collect(),
            ..Default::default()
        },
    };
    fitted.validate()?;
    Ok(fitted)
}
