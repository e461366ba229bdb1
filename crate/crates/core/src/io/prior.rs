//! Prior file: magic `GASPPRIR`, u16 version, u64 body length, body, CRC32.
//! Everything is stored as f64 so a trained prior reloads exactly.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::frame::{body, finish_sized, open_sized};
use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::Binding;
use crate::prior::{Decoder, PriorModel, FEATURE_DIM};
use crate::renderer::LocalGaussianSet;

pub const PRIOR_MAGIC: &[u8; 8] = b"GASPPRIR";
const VERSION: u16 = 1;
const WHAT: &str = "prior file";

fn count(x: usize) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::InvalidArgument(format!("{x} does not fit the prior header")))
}

pub fn encode_prior(prior: &PriorModel) -> Result<Vec<u8>> {
    prior.validate()?;
    let n = prior.len();
    if let Some(i) = (0..n).find(|&i| prior.template.binding_index[i] as usize != i) {
        return Err(Error::InvalidArgument(format!("template Gaussian {i} is not bound to its own binding")));
    }
    let mut w = body();
    w.u32(count(n)?);
    w.u32(count(prior.n_identities())?);
    w.u32(count(prior.code_dim())?);
    w.u32(count(prior.decoder.hidden_dim())?);
    let t = &prior.template;
    for i in 0..n {
        w.f64s(&t.mu[i]);
        w.f64s(&t.log_scale[i]);
        w.f64s(&t.rotation[i]);
        w.f64s(&t.color[i]);
        w.f64(t.opacity_logit[i]);
    }
    for (b, &s) in prior.bindings.iter().zip(&prior.scalp_mask) {
        w.u32(b.face);
        w.f64s(&b.barycentric);
        w.u8(s as u8);
    }
    w.f64s(prior.features.as_slice().expect("standard layout"));
    w.f64s(prior.codes.as_slice().expect("standard layout"));
    let tensors = prior.decoder.tensors();
    w.u32(count(tensors.len())?);
    for t in tensors {
        w.u64(t.len() as u64);
        w.f64s(t);
    }
    Ok(finish_sized(PRIOR_MAGIC, VERSION, w))
}

pub fn decode_prior(bytes: &[u8]) -> Result<PriorModel> {
    let mut r = open_sized(bytes, PRIOR_MAGIC, &[VERSION], WHAT)?;
    let n = r.u32()? as usize;
    let n_ids = r.u32()? as usize;
    let code_dim = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let mut template = LocalGaussianSet::with_capacity(n);
    for i in 0..n {
        let v = r.f64s(14)?;
        template.push(
            [v[0], v[1], v[2]],
            [v[3], v[4], v[5]],
            [v[6], v[7], v[8], v[9]],
            [v[10], v[11], v[12]],
            v[13],
            i as u32,
        );
    }
    let mut bindings = Vec::with_capacity(n);
    let mut scalp_mask = Vec::with_capacity(n);
    for _ in 0..n {
        let face = r.u32()?;
        let w = r.f64s(3)?;
        bindings.push(Binding {
            face,
            barycentric: [w[0], w[1], w[2]],
        });
        scalp_mask.push(r.u8()? != 0);
    }
    let features = Array2::from_shape_vec((n, FEATURE_DIM), r.f64s(n * FEATURE_DIM)?).expect("sized");
    let codes = Array2::from_shape_vec((n_ids, code_dim), r.f64s(n_ids * code_dim)?).expect("sized");
    // shapes come from the constructor, values from the file
    let mut decoder = Decoder::new(&mut ChaCha8Rng::seed_from_u64(0), code_dim, hidden);
    let stored = r.u32()? as usize;
    let mut tensors = decoder.tensors_mut();
    if stored != tensors.len() {
        return Err(Error::DimensionMismatch {
            what: "prior decoder tensors",
            expected: tensors.len(),
            got: stored,
        });
    }
    for t in tensors.iter_mut() {
        let len = r.u64()? as usize;
        if len != t.len() {
            return Err(Error::DimensionMismatch {
                what: "prior decoder tensor",
                expected: t.len(),
                got: len,
            });
        }
        for x in t.iter_mut() {
            *x = r.f64()?;
        }
    }
    if r.pos() + 4 != bytes.len() {
        return Err(Error::Truncated {
            what: WHAT,
            detail: "body length disagrees with its contents".into(),
        });
    }
    let prior = PriorModel {
        template,
        features,
        codes,
        decoder,
        bindings,
        scalp_mask,
    };
    prior.validate()?;
    Ok(prior)
}

pub fn save_prior(prior: &PriorModel, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_prior(prior)?)
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<PriorModel> {
    decode_prior(&read_bytes(path.as_ref())?)
}
