//! Binary avatar, prior and direction files, JSON sidecars and the run
//! configuration document.

mod avatar;
mod config;
mod direction;
mod frame;
mod prior;

pub use avatar::{
    avatar_file_size, decode_avatar, encode_avatar, load_avatar, quantize_bindings, save_avatar, sidecar_path,
    AVATAR_MAGIC, AVATAR_RECORD_BYTES, AVATAR_VERSION,
};
pub use config::{load_run_config, RenderConfig, RunConfig};
pub use direction::{decode_direction, encode_direction, load_direction, save_direction, DIRECTION_MAGIC};
pub use prior::{decode_prior, encode_prior, load_prior, save_prior, PRIOR_MAGIC};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
