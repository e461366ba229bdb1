//! Avatar file: magic `GASPAVTR`, u16 version, u32 Gaussian count, one
//! 68-byte record per Gaussian, CRC32. A record holds the face index (u32),
//! the first two barycentric weights, local position, log-scale, rotation,
//! color and opacity logit, all f32. The third weight is implied.
//!
//! Stage outputs and the anchor live in a JSON sidecar next to the binary
//! file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::frame::{open, verify_checksum, Writer, HEADER_BYTES};
use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::geometry::Binding;
use crate::pipelines::{FittedAvatar, Provenance};
use crate::renderer::LocalGaussianSet;

pub const AVATAR_MAGIC: &[u8; 8] = b"GASPAVTR";
pub const AVATAR_VERSION: u16 = 1;
pub const AVATAR_RECORD_BYTES: usize = 68;
const WHAT: &str = "avatar file";

/// Bytes of an avatar file with `n` Gaussians.
pub fn avatar_file_size(n: usize) -> usize {
    HEADER_BYTES + 4 + n * AVATAR_RECORD_BYTES + 4
}

/// Rounds the stored barycentric weights through f32 and recomputes the
/// third, which is what a save/load cycle produces.
pub fn quantize_bindings(bindings: &[Binding]) -> Vec<Binding> {
    bindings
        .iter()
        .map(|b| {
            let w0 = b.barycentric[0] as f32 as f64;
            let w1 = b.barycentric[1] as f32 as f64;
            Binding {
                face: b.face,
                barycentric: [w0, w1, 1.0 - w0 - w1],
            }
        })
        .collect()
}

pub fn encode_avatar(avatar: &LocalGaussianSet, bindings: &[Binding]) -> Result<Vec<u8>> {
    avatar.validate()?;
    let n = avatar.len();
    if bindings.len() != n {
        return Err(Error::DimensionMismatch {
            what: "avatar bindings",
            expected: n,
            got: bindings.len(),
        });
    }
    if let Some(i) = (0..n).find(|&i| avatar.binding_index[i] as usize != i) {
        return Err(Error::InvalidArgument(format!("Gaussian {i} is not bound to its own record")));
    }
    let count = u32::try_from(n).map_err(|_| Error::InvalidArgument("too many Gaussians".into()))?;
    let mut w = Writer::new(AVATAR_MAGIC, AVATAR_VERSION);
    w.buf.reserve(avatar_file_size(n));
    w.u32(count);
    for i in 0..n {
        w.u32(bindings[i].face);
        w.f32(bindings[i].barycentric[0] as f32);
        w.f32(bindings[i].barycentric[1] as f32);
        let fields = avatar.mu[i]
            .iter()
            .chain(&avatar.log_scale[i])
            .chain(&avatar.rotation[i])
            .chain(&avatar.color[i])
            .chain(std::iter::once(&avatar.opacity_logit[i]));
        for &x in fields {
            w.f32(x as f32);
        }
    }
    Ok(w.finish())
}

pub fn decode_avatar(bytes: &[u8]) -> Result<(LocalGaussianSet, Vec<Binding>)> {
    let (mut r, _) = open(bytes, AVATAR_MAGIC, &[AVATAR_VERSION], WHAT)?;
    let n = r.u32()? as usize;
    verify_checksum(bytes, avatar_file_size(n), WHAT)?;
    let mut avatar = LocalGaussianSet::with_capacity(n);
    let mut bindings = Vec::with_capacity(n);
    for i in 0..n {
        let face = r.u32()?;
        let w0 = r.f32()? as f64;
        let w1 = r.f32()? as f64;
        bindings.push(Binding {
            face,
            barycentric: [w0, w1, 1.0 - w0 - w1],
        });
        let mut v = [0.0; 14];
        for x in &mut v {
            *x = r.f32()? as f64;
        }
        avatar.push(
            [v[0], v[1], v[2]],
            [v[3], v[4], v[5]],
            [v[6], v[7], v[8], v[9]],
            [v[10], v[11], v[12]],
            v[13],
            i as u32,
        );
    }
    debug_assert_eq!(r.pos() + 4, bytes.len());
    Ok((avatar, bindings))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    provenance: Provenance,
    anchor: GaussianRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianRecord {
    mu: Vec<[f64; 3]>,
    log_scale: Vec<[f64; 3]>,
    rotation: Vec<[f64; 4]>,
    color: Vec<[f64; 3]>,
    opacity_logit: Vec<f64>,
    binding_index: Vec<u32>,
}

impl From<&LocalGaussianSet> for GaussianRecord {
    fn from(g: &LocalGaussianSet) -> Self {
        Self {
            mu: g.mu.clone(),
            log_scale: g.log_scale.clone(),
            rotation: g.rotation.clone(),
            color: g.color.clone(),
            opacity_logit: g.opacity_logit.clone(),
            binding_index: g.binding_index.clone(),
        }
    }
}

impl From<GaussianRecord> for LocalGaussianSet {
    fn from(r: GaussianRecord) -> Self {
        LocalGaussianSet {
            mu: r.mu,
            log_scale: r.log_scale,
            rotation: r.rotation,
            color: r.color,
            opacity_logit: r.opacity_logit,
            binding_index: r.binding_index,
        }
    }
}

/// `avatar.bin` → `avatar.bin.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_avatar(fitted: &FittedAvatar, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fitted.validate()?;
    write_bytes(path, &encode_avatar(&fitted.avatar, &fitted.bindings)?)?;
    let side = sidecar_path(path);
    let doc = Sidecar {
        provenance: fitted.provenance.clone(),
        anchor: (&fitted.anchor).into(),
    };
    let json = serde_json::to_vec_pretty(&doc).map_err(|e| Error::json(&side, e))?;
    write_bytes(&side, &json)
}

pub fn load_avatar(path: impl AsRef<Path>) -> Result<FittedAvatar> {
    let path = path.as_ref();
    let (avatar, bindings) = decode_avatar(&read_bytes(path)?)?;
    let side = sidecar_path(path);
    let doc: Sidecar = serde_json::from_slice(&read_bytes(&side)?).map_err(|e| Error::json(&side, e))?;
    let fitted = FittedAvatar {
        avatar,
        bindings,
        anchor: doc.anchor.into(),
        provenance: doc.provenance,
    };
    fitted.validate()?;
    Ok(fitted)
}
