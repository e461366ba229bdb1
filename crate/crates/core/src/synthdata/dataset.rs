//! Seeded toy-head dataset: identities × views with ground-truth images.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::zbuffer::render_ground_truth;
use crate::error::{Error, Result};
use crate::geometry::{sample_identity, HeadIdentity, HeadModelConfig, HeadTexture, Rigid, ToyHeadModel};
use crate::image::Image;
use crate::renderer::{orbit_camera, Camera};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_identities: usize,
    pub images_per_identity: usize,
    pub image_size: usize,
    pub azimuth_range: [f64; 2],
    pub elevation_range: [f64; 2],
    pub camera_radius: f64,
    pub fov_y_deg: f64,
    pub head: HeadModelConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_identities: 50,
            images_per_identity: 30,
            image_size: 64,
            azimuth_range: [-180.0, 180.0],
            elevation_range: [-20.0, 45.0],
            camera_radius: 4.0,
            fov_y_deg: 40.0,
            head: HeadModelConfig::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_identities == 0 || self.images_per_identity == 0 || self.image_size == 0 {
            return Err(Error::InvalidArgument("dataset sizes must be positive".into()));
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.azimuth_range) || !ordered(self.elevation_range) {
            return Err(Error::InvalidArgument("camera ranges must be finite and ordered".into()));
        }
        if !(self.camera_radius > 0.0) {
            return Err(Error::InvalidArgument("camera radius must be positive".into()));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.n_identities * self.images_per_identity
    }

    pub fn camera(&self, azimuth_deg: f64, elevation_deg: f64) -> Result<Camera> {
        orbit_camera(
            azimuth_deg,
            elevation_deg,
            self.camera_radius,
            self.fov_y_deg,
            self.image_size,
            self.image_size,
        )
    }
}

/// Mixes a seed with stream indices (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Azimuth and elevation in degrees, uniform over the configured ranges.
pub fn sample_view(seed: u64, cfg: &DatasetConfig) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let az = lerp(cfg.azimuth_range, rng.random::<f64>());
    let el = lerp(cfg.elevation_range, rng.random::<f64>());
    (az, el)
}

pub fn sample_camera(seed: u64, cfg: &DatasetConfig) -> Result<Camera> {
    cfg.validate()?;
    let (az, el) = sample_view(seed, cfg);
    cfg.camera(az, el)
}

fn lerp(r: [f64; 2], t: f64) -> f64 {
    r[0] + (r[1] - r[0]) * t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub index: usize,
    #[serde(flatten)]
    pub params: HeadIdentity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub identity: usize,
    pub expression_coeffs: Vec<f64>,
    pub rigid: Rigid,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub camera: Camera,
    pub rgb_path: String,
    pub alpha_path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub seed: u64,
    pub head_model: ToyHeadModel,
    pub identities: Vec<IdentityRecord>,
    pub samples: Vec<SampleRecord>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub record: SampleRecord,
    pub rgb: Image,
    pub alpha: Image,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn head_model(&self) -> &ToyHeadModel {
        &self.manifest.head_model
    }

    pub fn identity(&self, index: usize) -> Result<&HeadIdentity> {
        self.manifest
            .identities
            .get(index)
            .map(|r| &r.params)
            .ok_or(Error::IndexOutOfRange {
                what: "dataset identities",
                index,
                len: self.manifest.identities.len(),
            })
    }

    pub fn samples_of(&self, identity: usize) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.record.identity == identity)
    }
}

/// Renders the ground truth for one record, quantized to 8 bits as stored.
pub fn render_record(model: &ToyHeadModel, identity: &HeadIdentity, rec: &SampleRecord) -> Result<(Image, Image)> {
    let mesh = model.ground_truth_mesh(identity, &rec.expression_coeffs, &rec.rigid)?;
    let (rgb, alpha) = render_ground_truth(&mesh, &HeadTexture { identity }, &rec.camera);
    Ok((rgb.quantized(), alpha.quantized()))
}

/// Builds the whole dataset in memory. Views of one identity are drawn with
/// one azimuth per equal-width stratum so every identity is seen from all
/// around; within a stratum the draw is uniform.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let model = ToyHeadModel::new(cfg.head.clone());
    let identities: Vec<IdentityRecord> = (0..cfg.n_identities)
        .map(|i| IdentityRecord {
            index: i,
            params: sample_identity(derive_seed(cfg.seed, 1, i as u64), &model),
        })
        .collect();
    let n = cfg.images_per_identity;
    let mut records = Vec::with_capacity(cfg.total_samples());
    for id in 0..cfg.n_identities {
        for k in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2 + id as u64, k as u64));
            let (a0, a1) = (cfg.azimuth_range[0], cfg.azimuth_range[1]);
            let width = (a1 - a0) / n as f64;
            let az = a0 + width * (k as f64 + rng.random::<f64>());
            let el = lerp(cfg.elevation_range, rng.random::<f64>());
            let expression_coeffs = (0..model.expression_dims()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let sid = format!("{id:04}_{k:03}");
            records.push(SampleRecord {
                rgb_path: format!("images/{sid}_rgb.png"),
                alpha_path: format!("images/{sid}_alpha.png"),
                id: sid,
                identity: id,
                expression_coeffs,
                rigid: Rigid::identity(),
                azimuth_deg: az,
                elevation_deg: el,
                camera: cfg.camera(az, el)?,
            });
        }
    }
    let samples = records
        .into_par_iter()
        .map(|record| {
            let (rgb, alpha) = render_record(&model, &identities[record.identity].params, &record)?;
            Ok(Sample { record, rgb, alpha })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest: Manifest {
            config: cfg.clone(),
            seed: cfg.seed,
            head_model: model,
            identities,
            samples: samples.iter().map(|s| s.record.clone()).collect(),
        },
        samples,
    })
}

pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    ds.samples.par_iter().try_for_each(|s| {
        s.rgb.save_png(dir.join(&s.record.rgb_path))?;
        s.alpha.save_png(dir.join(&s.record.alpha_path))
    })?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&ds.manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Builds the dataset and writes it to `dir`.
pub fn generate_dataset(cfg: &DatasetConfig, dir: impl AsRef<Path>) -> Result<Dataset> {
    let ds = build_dataset(cfg)?;
    write_dataset(&ds, dir)?;
    Ok(ds)
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir: PathBuf = dir.as_ref().to_path_buf();
    let manifest = load_manifest(&dir)?;
    let samples = manifest
        .samples
        .par_iter()
        .map(|r| {
            let rgb = Image::load_png(dir.join(&r.rgb_path))?;
            let alpha = Image::load_png(dir.join(&r.alpha_path))?;
            Ok(Sample {
                record: r.clone(),
                rgb,
                alpha,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, samples })
}
