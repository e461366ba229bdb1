//! Views with ground truth and the glue that turns an avatar plus head
//! parameters into a render.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{binding_frames, build_bindings_from_uv, Binding, Rigid, ToyHeadModel, TriangleFrame};
use crate::image::Image;
use crate::prior::{init_prior, PriorConfig, PriorModel};
use crate::renderer::{render, Camera, LocalGaussianSet, RasterSettings, Rendered};
use crate::synthdata::{derive_seed, render_record, Dataset, DatasetConfig, SampleRecord};
use crate::geometry::HeadIdentity;

/// One posed observation of a subject.
#[derive(Clone, Debug)]
pub struct View {
    pub expression_coeffs: Vec<f64>,
    pub rigid: Rigid,
    pub camera: Camera,
    pub rgb: Image,
    pub alpha: Image,
}

/// Images of one subject plus its tracked identity coefficients.
#[derive(Clone, Debug)]
pub struct Enrollment {
    pub identity_coeffs: Vec<f64>,
    pub views: Vec<View>,
}

impl Enrollment {
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::InvalidArgument("enrollment needs at least one view".into()));
        }
        Ok(())
    }
}

/// Camera and pose of a view without its images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub expression_coeffs: Vec<f64>,
}

/// Renders ground truth of a generator identity at the given views.
pub fn ground_truth_views(
    model: &ToyHeadModel,
    identity: &HeadIdentity,
    cfg: &DatasetConfig,
    specs: &[ViewSpec],
) -> Result<Vec<View>> {
    specs
        .iter()
        .map(|s| {
            let camera = cfg.camera(s.azimuth_deg, s.elevation_deg)?;
            let rec = SampleRecord {
                id: String::new(),
                identity: 0,
                expression_coeffs: s.expression_coeffs.clone(),
                rigid: Rigid::identity(),
                azimuth_deg: s.azimuth_deg,
                elevation_deg: s.elevation_deg,
                camera: camera.clone(),
                rgb_path: String::new(),
                alpha_path: String::new(),
            };
            let (rgb, alpha) = render_record(model, identity, &rec)?;
            Ok(View {
                expression_coeffs: s.expression_coeffs.clone(),
                rigid: Rigid::identity(),
                camera,
                rgb,
                alpha,
            })
        })
        .collect()
}

/// Enrollment for generator identity `identity` of a dataset from explicit
/// view specs.
pub fn enrollment_from_generator(
    model: &ToyHeadModel,
    identity: &HeadIdentity,
    cfg: &DatasetConfig,
    specs: &[ViewSpec],
) -> Result<Enrollment> {
    Ok(Enrollment {
        identity_coeffs: identity.identity_coeffs.clone(),
        views: ground_truth_views(model, identity, cfg, specs)?,
    })
}

/// The dataset's own samples of one identity as views.
pub fn dataset_views(ds: &Dataset, identity: usize) -> Vec<View> {
    ds.samples_of(identity)
        .map(|s| View {
            expression_coeffs: s.record.expression_coeffs.clone(),
            rigid: s.record.rigid,
            camera: s.record.camera.clone(),
            rgb: s.rgb.clone(),
            alpha: s.alpha.clone(),
        })
        .collect()
}

/// Frames of every binding on the hairless posed head.
pub fn view_frames(
    model: &ToyHeadModel,
    bindings: &[Binding],
    identity_coeffs: &[f64],
    expression_coeffs: &[f64],
    rigid: &Rigid,
) -> Result<Vec<TriangleFrame>> {
    let mesh = model.pose_head(identity_coeffs, expression_coeffs, rigid)?;
    binding_frames(&mesh, bindings)
}

pub fn enrollment_frames(model: &ToyHeadModel, bindings: &[Binding], e: &Enrollment) -> Result<Vec<Vec<TriangleFrame>>> {
    e.views
        .iter()
        .map(|v| view_frames(model, bindings, &e.identity_coeffs, &v.expression_coeffs, &v.rigid))
        .collect()
}

pub fn render_view(
    avatar: &LocalGaussianSet,
    frames: &[TriangleFrame],
    view: &View,
    settings: &RasterSettings,
) -> Result<Rendered> {
    render(avatar, frames, &view.camera, settings)
}

/// UV bindings on the neutral head and the matching per-Gaussian scalp mask.
pub fn head_bindings(model: &ToyHeadModel, uv_resolution: usize) -> Result<(Vec<Binding>, Vec<bool>)> {
    let neutral = model.pose_head(
        &vec![0.0; model.identity_dims()],
        &vec![0.0; model.expression_dims()],
        &Rigid::identity(),
    )?;
    let bindings = build_bindings_from_uv(&neutral, uv_resolution)?;
    let scalp = bindings.iter().map(|b| model.scalp_face_mask[b.face as usize]).collect();
    Ok((bindings, scalp))
}

/// Fresh prior bound to the toy head.
pub fn init_head_prior(
    model: &ToyHeadModel,
    uv_resolution: usize,
    n_identities: usize,
    cfg: &PriorConfig,
    seed: u64,
) -> Result<PriorModel> {
    let (bindings, scalp) = head_bindings(model, uv_resolution)?;
    init_prior(bindings, scalp, n_identities, cfg, seed)
}

/// Capture settings for enrollment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnrollmentSetting {
    /// One frontal image with a neutral expression.
    SingleImage,
    /// One frontal camera, changing expressions.
    Monocular,
    /// Simultaneous cameras over the frontal half, neutral expression.
    MultiCam,
}

/// View specs for a capture setting. `n_views` is ignored for a single image.
pub fn enrollment_specs(setting: EnrollmentSetting, n_views: usize, expression_dims: usize, seed: u64) -> Vec<ViewSpec> {
    let neutral = vec![0.0; expression_dims];
    match setting {
        EnrollmentSetting::SingleImage => vec![ViewSpec {
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            expression_coeffs: neutral,
        }],
        EnrollmentSetting::Monocular => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 400, 0));
            (0..n_views.max(1))
                .map(|k| ViewSpec {
                    azimuth_deg: 0.0,
                    elevation_deg: 0.0,
                    expression_coeffs: if k == 0 {
                        neutral.clone()
                    } else {
                        (0..expression_dims).map(|_| rng.random_range(-1.0..=1.0)).collect()
                    },
                })
                .collect()
        }
        EnrollmentSetting::MultiCam => {
            let n = n_views.max(1);
            (0..n)
                .map(|k| ViewSpec {
                    azimuth_deg: if n == 1 { 0.0 } else { -90.0 + 180.0 * k as f64 / (n - 1) as f64 },
                    elevation_deg: 0.0,
                    expression_coeffs: neutral.clone(),
                })
                .collect()
        }
    }
}
