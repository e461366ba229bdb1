//! Template + per-Gaussian features + identity codes + shared decoder.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::decoder::{Decoder, DecoderCache, FEATURE_DIM, OFFSET_DIM};
use crate::error::{ensure_len, Error, Result};
use crate::geometry::Binding;
use crate::renderer::{normalize_quat_backward, AttributeGroup, LocalGaussianSet, LocalGradients};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub code_dim: usize,
    pub hidden: usize,
    /// Standard deviation of initial features and codes.
    pub init_std: f64,
    /// Initial isotropic triangle-local scale of template Gaussians.
    pub init_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            code_dim: 32,
            hidden: 64,
            init_std: 0.01,
            init_scale: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorModel {
    pub template: LocalGaussianSet,
    /// One row per Gaussian.
    pub features: Array2<f64>,
    /// One row per identity.
    pub codes: Array2<f64>,
    pub decoder: Decoder,
    pub bindings: Vec<Binding>,
    pub scalp_mask: Vec<bool>,
}

/// Fresh prior whose decoded avatars all equal the template.
pub fn init_prior(
    bindings: Vec<Binding>,
    scalp_mask: Vec<bool>,
    n_identities: usize,
    cfg: &PriorConfig,
    seed: u64,
) -> Result<PriorModel> {
    let n = bindings.len();
    if n == 0 || n_identities == 0 || cfg.code_dim == 0 || cfg.hidden == 0 {
        return Err(Error::InvalidArgument("prior sizes must be positive".into()));
    }
    ensure_len("scalp mask", n, scalp_mask.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let features = Array2::from_shape_fn((n, FEATURE_DIM), |_| normal.sample(&mut rng));
    let codes = Array2::from_shape_fn((n_identities, cfg.code_dim), |_| normal.sample(&mut rng));
    let decoder = Decoder::new(&mut rng, cfg.code_dim, cfg.hidden);
    let log_scale = cfg.init_scale.ln();
    let mut template = LocalGaussianSet::with_capacity(n);
    for i in 0..n {
        template.push([0.0; 3], [log_scale; 3], [1.0, 0.0, 0.0, 0.0], [0.5; 3], 0.0, i as u32);
    }
    Ok(PriorModel {
        template,
        features,
        codes,
        decoder,
        bindings,
        scalp_mask,
    })
}

/// Forward state of [`PriorModel::decode_code`].
#[derive(Clone, Debug)]
pub struct DecodeCache {
    decoder: DecoderCache,
    /// Template rotation plus decoded offset, before normalization.
    raw_rotation: Vec<[f64; 4]>,
}

/// Gradients for every learnable part of a [`PriorModel`] touched by one
/// decode.
#[derive(Clone, Debug)]
pub struct PriorGradients {
    pub template: LocalGradients,
    pub features: Array2<f64>,
    pub code: Array1<f64>,
    pub decoder: Decoder,
}

impl PriorModel {
    pub fn len(&self) -> usize {
        self.template.len()
    }

    pub fn is_empty(&self) -> bool {
        self.template.is_empty()
    }

    pub fn n_identities(&self) -> usize {
        self.codes.nrows()
    }

    pub fn code_dim(&self) -> usize {
        self.codes.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.template.len();
        self.template.validate()?;
        self.decoder.validate()?;
        ensure_len("prior features", n, self.features.nrows())?;
        ensure_len("feature width", FEATURE_DIM, self.features.ncols())?;
        ensure_len("prior bindings", n, self.bindings.len())?;
        ensure_len("scalp mask", n, self.scalp_mask.len())?;
        ensure_len("code width", self.decoder.code_dim(), self.codes.ncols())?;
        Ok(())
    }

    pub fn code(&self, identity: usize) -> Result<Array1<f64>> {
        if identity >= self.n_identities() {
            return Err(Error::IndexOutOfRange {
                what: "identity codes",
                index: identity,
                len: self.n_identities(),
            });
        }
        Ok(self.codes.row(identity).to_owned())
    }

    fn decoder_input(&self, code: &[f64]) -> Result<Array2<f64>> {
        ensure_len("identity code", self.decoder.code_dim(), code.len())?;
        let n = self.len();
        let mut x = Array2::zeros((n, FEATURE_DIM + code.len()));
        x.slice_mut(s![.., ..FEATURE_DIM]).assign(&self.features);
        let c = ArrayView2::from_shape((1, code.len()), code).expect("row view");
        x.slice_mut(s![.., FEATURE_DIM..]).assign(&c.broadcast((n, code.len())).expect("broadcast"));
        Ok(x)
    }

    /// Raw decoder offsets for every Gaussian given a code.
    pub fn offsets(&self, code: &[f64]) -> Result<LocalGradients> {
        let (out, _) = self.decoder.forward(self.decoder_input(code)?)?;
        Ok(offsets_from_matrix(&out))
    }

    /// Template plus decoded offsets, rotations renormalized.
    pub fn decode_code(&self, code: &[f64]) -> Result<(LocalGaussianSet, DecodeCache)> {
        let (out, cache) = self.decoder.forward(self.decoder_input(code)?)?;
        let off = offsets_from_matrix(&out);
        let mut avatar = self.template.clone();
        for g in AttributeGroup::ALL {
            for (a, o) in avatar.group_mut(g).iter_mut().zip(off.group(g)) {
                *a += o;
            }
        }
        let raw_rotation = avatar.rotation.clone();
        avatar.renormalize_rotations();
        Ok((
            avatar,
            DecodeCache {
                decoder: cache,
                raw_rotation,
            },
        ))
    }

    pub fn decode_avatar(&self, identity: usize) -> Result<LocalGaussianSet> {
        let code = self.code(identity)?;
        Ok(self.decode_code(code.as_slice().expect("contiguous"))?.0)
    }

    pub fn zero_gradients(&self) -> PriorGradients {
        PriorGradients {
            template: LocalGradients::zeros(self.len()),
            features: Array2::zeros(self.features.raw_dim()),
            code: Array1::zeros(self.code_dim()),
            decoder: self.decoder.zeros_like(),
        }
    }

    /// Pulls a gradient on the decoded avatar back to template, features,
    /// code and decoder. Accumulates into `grad`.
    pub fn decode_backward(&self, cache: &DecodeCache, d_avatar: &LocalGradients, grad: &mut PriorGradients) -> Result<()> {
        ensure_len("avatar gradient", self.len(), d_avatar.len())?;
        ensure_len("decode cache", self.len(), cache.decoder.rows())?;
        let mut d_pre = d_avatar.clone();
        for (g, raw) in d_pre.rotation.iter_mut().zip(&cache.raw_rotation) {
            *g = normalize_quat_backward(*raw, *g);
        }
        grad.template.add_scaled(&d_pre, 1.0);
        let d_out = matrix_from_offsets(&d_pre);
        let d_in = self.decoder.backward(&cache.decoder, d_out.view(), &mut grad.decoder)?;
        grad.features += &d_in.slice(s![.., ..FEATURE_DIM]);
        grad.code += &d_in.slice(s![.., FEATURE_DIM..]).sum_axis(ndarray::Axis(0));
        Ok(())
    }

    pub fn feature_matrix(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }
}

pub fn offsets_from_matrix(m: &Array2<f64>) -> LocalGradients {
    let n = m.nrows();
    let mut out = LocalGradients::zeros(n);
    for (i, row) in m.rows().into_iter().enumerate() {
        let mut col = 0;
        for g in AttributeGroup::ALL {
            let a = g.arity();
            out.group_mut(g)[i * a..(i + 1) * a].copy_from_slice(&row.as_slice().expect("row")[col..col + a]);
            col += a;
        }
    }
    out
}

pub fn matrix_from_offsets(o: &LocalGradients) -> Array2<f64> {
    let n = o.len();
    let mut m = Array2::zeros((n, OFFSET_DIM));
    for i in 0..n {
        let mut col = 0;
        for g in AttributeGroup::ALL {
            let a = g.arity();
            for k in 0..a {
                m[(i, col + k)] = o.group(g)[i * a + k];
            }
            col += a;
        }
    }
    m
}
