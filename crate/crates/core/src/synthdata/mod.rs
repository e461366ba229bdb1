//! Procedural toy-head dataset and its independent ground-truth renderer.

mod dataset;
mod zbuffer;

pub use dataset::{
    build_dataset, derive_seed, generate_dataset, load_dataset, load_manifest, render_record, sample_camera,
    sample_view, write_dataset, Dataset, DatasetConfig, IdentityRecord, Manifest, Sample, SampleRecord,
};
pub use zbuffer::render_ground_truth;
