//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Result};
use crate::renderer::{AttributeGroup, LocalGaussianSet, LocalGradients};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    ensure_len("adam parameters", state.m.len(), params.len())?;
    ensure_len("adam gradients", params.len(), grads.len())?;
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Per-group learning rates for triangle-local Gaussian attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupRates {
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub color: f64,
    pub opacity: f64,
}

impl Default for GroupRates {
    /// Conventional splatting rates.
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            log_scale: 5e-3,
            rotation: 1e-3,
            color: 2.5e-3,
            opacity: 5e-2,
        }
    }
}

impl GroupRates {
    pub fn uniform(lr: f64) -> Self {
        Self {
            position: lr,
            log_scale: lr,
            rotation: lr,
            color: lr,
            opacity: lr,
        }
    }

    pub fn get(&self, g: AttributeGroup) -> f64 {
        match g {
            AttributeGroup::Position => self.position,
            AttributeGroup::LogScale => self.log_scale,
            AttributeGroup::Rotation => self.rotation,
            AttributeGroup::Color => self.color,
            AttributeGroup::Opacity => self.opacity,
        }
    }
}

/// One Adam state per attribute group.
#[derive(Clone, Debug)]
pub struct LocalAdam {
    states: Vec<AdamState>,
    base: Vec<f64>,
}

impl LocalAdam {
    pub fn new(n: usize, rates: &GroupRates) -> Self {
        Self {
            states: AttributeGroup::ALL
                .iter()
                .map(|&g| AdamState::new(n * g.arity(), rates.get(g)))
                .collect(),
            base: AttributeGroup::ALL.iter().map(|&g| rates.get(g)).collect(),
        }
    }

    /// Sets every group rate to `scale` times its initial value.
    pub fn set_rate_scale(&mut self, scale: f64) {
        for (s, b) in self.states.iter_mut().zip(&self.base) {
            s.lr = b * scale;
        }
    }

    /// Updates `params`, then clamps colors and renormalizes rotations.
    pub fn step(&mut self, params: &mut LocalGaussianSet, grads: &LocalGradients) -> Result<()> {
        for (k, g) in AttributeGroup::ALL.into_iter().enumerate() {
            adam_step(params.group_mut(g), grads.group(g), &mut self.states[k])?;
        }
        params.clamp_colors();
        params.renormalize_rotations();
        Ok(())
    }

    /// Same as [`LocalAdam::step`] on raw offsets, without projection.
    pub fn step_raw(&mut self, params: &mut LocalGradients, grads: &LocalGradients) -> Result<()> {
        for (k, g) in AttributeGroup::ALL.into_iter().enumerate() {
            adam_step(params.group_mut(g), grads.group(g), &mut self.states[k])?;
        }
        Ok(())
    }
}
