//! Prior training, three-stage fitting and evaluation.

mod eval;
mod fit;
mod train;
mod views;

pub use eval::{evaluate, image_metrics, EvalReport, ViewMetrics};
pub use fit::{
    fit, fit_stage1_inversion, fit_stage2_finetune, fit_stage3_refine, fit_without_prior, quantize_f32, FitConfig,
    FittedAvatar, Provenance, StageReport,
};
pub use train::{dataset_l1, train_prior, train_prior_from, TrainConfig, TrainReport};
pub use views::{
    dataset_views, enrollment_frames, enrollment_specs, EnrollmentSetting, enrollment_from_generator, ground_truth_views, head_bindings, init_head_prior,
    render_view, view_frames, Enrollment, View, ViewSpec,
};
