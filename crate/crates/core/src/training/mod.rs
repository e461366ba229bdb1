//! Losses, differentiable SSIM and the Adam optimizer.

mod adam;
mod loss;
mod ssim;

pub use adam::{adam_step, AdamState, GroupRates, LocalAdam};
pub use loss::{
    alpha_loss, l1_loss, prior_reg_loss, psnr, reg_loss, ssim_loss, total_loss, LossContext, LossOutput, LossParts,
    LossWeights, PerceptualScorer,
};
pub use ssim::{ssim, SSIM_SIGMA, SSIM_WINDOW};
