//! Joint optimization of template, features, codes and decoder over a
//! dataset.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::views::{dataset_views, init_head_prior, view_frames, View};
use crate::error::{Error, Result};
use crate::geometry::TriangleFrame;
use crate::prior::{PriorConfig, PriorModel};
use crate::renderer::{render, render_backward, RasterSettings};
use crate::synthdata::{derive_seed, Dataset};
use crate::training::{adam_step, l1_loss, total_loss, AdamState, GroupRates, LocalAdam, LossContext, LossWeights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    /// Images whose gradients are summed before one optimizer step.
    pub batch_size: usize,
    pub uv_resolution: usize,
    pub prior: PriorConfig,
    pub template_rates: GroupRates,
    pub lr_decoder: f64,
    pub lr_codes: f64,
    pub lr_features: f64,
    /// Learning rates decay exponentially to this fraction of their initial
    /// value by the last step.
    pub lr_final_factor: f64,
    pub weights: LossWeights,
    /// Steps averaged into one loss-history point; 0 means one epoch.
    pub history_window: usize,
    pub tile_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 6000,
            batch_size: 1,
            uv_resolution: 32,
            prior: PriorConfig::default(),
            template_rates: GroupRates {
                position: 2e-3,
                log_scale: 5e-3,
                rotation: 2e-3,
                color: 5e-3,
                opacity: 2e-2,
            },
            lr_decoder: 1e-3,
            lr_codes: 2e-3,
            lr_features: 2e-3,
            lr_final_factor: 0.1,
            weights: LossWeights::default(),
            history_window: 0,
            tile_size: crate::renderer::DEFAULT_TILE_SIZE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.uv_resolution == 0 || self.tile_size == 0 {
            return Err(Error::InvalidArgument("batch size, uv resolution and tile size must be positive".into()));
        }
        let rates = [
            self.lr_decoder,
            self.lr_codes,
            self.lr_features,
            self.template_rates.position,
            self.template_rates.log_scale,
            self.template_rates.rotation,
            self.template_rates.color,
            self.template_rates.opacity,
        ];
        if rates.iter().any(|r| !(*r >= 0.0)) || !(self.lr_final_factor > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be non-negative".into()));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    /// Windowed mean of the total objective.
    pub loss_history: Vec<f64>,
    /// Windowed mean of the image L1 term.
    pub l1_history: Vec<f64>,
    /// Mean L1 over every training image before the first step.
    pub initial_l1: f64,
    /// Mean L1 over every training image after the last step.
    pub final_l1: f64,
}

struct PriorOptimizer {
    template: LocalAdam,
    features: AdamState,
    codes: Vec<AdamState>,
    decoder: Vec<AdamState>,
    base: Vec<f64>,
}

impl PriorOptimizer {
    fn new(prior: &PriorModel, cfg: &TrainConfig) -> Self {
        let decoder: Vec<AdamState> = prior
            .decoder
            .tensors()
            .iter()
            .map(|t| AdamState::new(t.len(), cfg.lr_decoder))
            .collect();
        let template = LocalAdam::new(prior.len(), &cfg.template_rates);
        Self {
            template,
            features: AdamState::new(prior.features.len(), cfg.lr_features),
            codes: (0..prior.n_identities())
                .map(|_| AdamState::new(prior.code_dim(), cfg.lr_codes))
                .collect(),
            decoder,
            base: vec![cfg.lr_features, cfg.lr_codes, cfg.lr_decoder],
        }
    }

    fn set_scale(&mut self, s: f64) {
        self.template.set_rate_scale(s);
        self.features.lr = self.base[0] * s;
        for c in &mut self.codes {
            c.lr = self.base[1] * s;
        }
        for d in &mut self.decoder {
            d.lr = self.base[2] * s;
        }
    }
}

/// Frames for every dataset sample, in dataset order.
fn sample_frames(ds: &Dataset, prior: &PriorModel) -> Result<Vec<Vec<TriangleFrame>>> {
    let model = ds.head_model();
    ds.samples
        .iter()
        .map(|s| {
            let id = ds.identity(s.record.identity)?;
            view_frames(model, &prior.bindings, &id.identity_coeffs, &s.record.expression_coeffs, &s.record.rigid)
        })
        .collect()
}

/// Mean image L1 of every identity's decoded avatar over its dataset views.
pub fn dataset_l1(prior: &PriorModel, ds: &Dataset, settings: &RasterSettings) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for id in 0..ds.manifest.identities.len().min(prior.n_identities()) {
        let avatar = prior.decode_avatar(id)?;
        let coeffs = &ds.identity(id)?.identity_coeffs;
        for v in dataset_views(ds, id) {
            sum += view_l1(prior, &avatar, coeffs, &v, ds, settings)?;
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

fn view_l1(
    prior: &PriorModel,
    avatar: &crate::renderer::LocalGaussianSet,
    coeffs: &[f64],
    v: &View,
    ds: &Dataset,
    settings: &RasterSettings,
) -> Result<f64> {
    let frames = view_frames(ds.head_model(), &prior.bindings, coeffs, &v.expression_coeffs, &v.rigid)?;
    let r = render(avatar, &frames, &v.camera, settings)?;
    Ok(l1_loss(&r.target.rgb, &v.rgb)?.0)
}

/// Trains a prior from scratch on every identity of `ds`.
pub fn train_prior(ds: &Dataset, cfg: &TrainConfig) -> Result<(PriorModel, TrainReport)> {
    cfg.validate()?;
    let prior = init_head_prior(
        ds.head_model(),
        cfg.uv_resolution,
        ds.manifest.identities.len(),
        &cfg.prior,
        derive_seed(cfg.seed, 100, 0),
    )?;
    train_prior_from(prior, ds, cfg)
}

/// Continues training an existing prior.
pub fn train_prior_from(mut prior: PriorModel, ds: &Dataset, cfg: &TrainConfig) -> Result<(PriorModel, TrainReport)> {
    cfg.validate()?;
    prior.validate()?;
    if ds.samples.is_empty() {
        return Err(Error::InvalidArgument("dataset has no samples".into()));
    }
    if ds.manifest.identities.len() > prior.n_identities() {
        return Err(Error::DimensionMismatch {
            what: "prior identity codes",
            expected: ds.manifest.identities.len(),
            got: prior.n_identities(),
        });
    }
    let settings = RasterSettings {
        tile_size: cfg.tile_size,
        background: [0.0; 3],
    };
    let frames = sample_frames(ds, &prior)?;
    let mut report = TrainReport {
        initial_l1: dataset_l1(&prior, ds, &settings)?,
        ..Default::default()
    };
    let mut opt = PriorOptimizer::new(&prior, cfg);
    let n = ds.samples.len();
    let window = if cfg.history_window == 0 { n } else { cfg.history_window };
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    let (mut win_loss, mut win_l1, mut win_n) = (0.0, 0.0, 0usize);

    for step in 0..cfg.steps {
        let t = if cfg.steps > 1 { step as f64 / (cfg.steps - 1) as f64 } else { 0.0 };
        opt.set_scale(cfg.lr_final_factor.powf(t));
        let mut grad = prior.zero_gradients();
        let mut code_grads: Vec<(usize, Array1<f64>)> = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order = (0..n).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 200, epoch)));
                epoch += 1;
                cursor = 0;
            }
            let si = order[cursor];
            cursor += 1;
            let sample = &ds.samples[si];
            let id = sample.record.identity;
            let code = prior.code(id)?;
            let (avatar, cache) = prior.decode_code(code.as_slice().expect("contiguous"))?;
            let rendered = render(&avatar, &frames[si], &sample.record.camera, &settings)?;
            let ctx = LossContext {
                weights: &cfg.weights,
                scalp_mask: &prior.scalp_mask,
                anchor: None,
                perceptual: None,
            };
            let loss = total_loss(&rendered.target, &sample.rgb, &sample.alpha, &avatar, &ctx)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    detail: format!("sample {}", sample.record.id),
                });
            }
            let g = render_backward(&avatar, &frames[si], &rendered, &loss.d_rgb, &loss.d_alpha)?;
            let mut d_avatar = g.local;
            d_avatar.add_scaled(&loss.d_locals, 1.0);
            grad.code.fill(0.0);
            prior.decode_backward(&cache, &d_avatar, &mut grad)?;
            code_grads.push((id, grad.code.clone()));
            win_loss += loss.total;
            win_l1 += loss.parts.l1;
            win_n += 1;
        }
        opt.template.step(&mut prior.template, &grad.template)?;
        adam_step(
            prior.features.as_slice_mut().expect("contiguous"),
            grad.features.as_slice().expect("contiguous"),
            &mut opt.features,
        )?;
        for (d, (p, g)) in opt
            .decoder
            .iter_mut()
            .zip(prior.decoder.tensors_mut().into_iter().zip(grad.decoder.tensors()))
        {
            adam_step(p, g, d)?;
        }
        // codes of identities that appear in the batch, in batch order
        let mut merged: Vec<(usize, Array1<f64>)> = Vec::new();
        for (id, g) in code_grads {
            match merged.iter_mut().find(|(j, _)| *j == id) {
                Some((_, acc)) => *acc += &g,
                None => merged.push((id, g)),
            }
        }
        for (id, g) in merged {
            let mut row = prior.codes.row_mut(id);
            adam_step(
                row.as_slice_mut().expect("contiguous"),
                g.as_slice().expect("contiguous"),
                &mut opt.codes[id],
            )?;
        }
        if win_n >= window || step + 1 == cfg.steps {
            report.loss_history.push(win_loss / win_n as f64);
            report.l1_history.push(win_l1 / win_n as f64);
            (win_loss, win_l1, win_n) = (0.0, 0.0, 0);
        }
    }
    report.steps = cfg.steps;
    report.final_l1 = dataset_l1(&prior, ds, &settings)?;
    Ok((prior, report))
}
