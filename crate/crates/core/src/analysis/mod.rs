//! Latent-space analysis: PCA of per-Gaussian features and linear
//! directions in code space.

mod pca;
mod svm;

pub use pca::{pca_features, pca_uv_image, PcaResult};
pub use svm::{edit_latent, scalp_extent, svm_direction, LatentDirection, SvmConfig};
