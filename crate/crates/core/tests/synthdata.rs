mod common;

use nalgebra::{Matrix3, Vector3};
use splat_avatar::geometry::{HeadTexture, Mesh, Rigid, ToyHeadModel};
use splat_avatar::renderer::Camera;
use splat_avatar::synthdata::*;

fn small_cfg() -> DatasetConfig {
    DatasetConfig {
        n_identities: 4,
        images_per_identity: 30,
        image_size: 48,
        seed: 17,
        ..DatasetConfig::default()
    }
}

#[test]
fn cameras_stay_in_range_and_are_uniform() {
    let cfg = DatasetConfig::default();
    let mut sum = 0.0;
    for s in 0..10_000u64 {
        let (az, el) = sample_view(s, &cfg);
        assert!((-180.0..=180.0).contains(&az));
        assert!((-20.0..=45.0).contains(&el));
        sum += az;
    }
    assert!((sum / 10_000.0).abs() < 5.0);
    let cam = sample_camera(3, &cfg).unwrap();
    assert!((cam.center().norm() - cfg.camera_radius).abs() < 1e-12);
}

#[test]
fn front_camera_convention() {
    let cfg = DatasetConfig::default();
    let cam = cfg.camera(0.0, 0.0).unwrap();
    assert!((cam.center() - Vector3::new(0.0, 0.0, cfg.camera_radius)).norm() < 1e-12);
    let forward = cam.rotation_matrix().row(2).transpose();
    assert!((forward - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
}

fn flat(c: [f64; 3]) -> impl Fn([f64; 2]) -> [f64; 3] {
    move |_| c
}

#[test]
fn full_screen_triangle() {
    let cam = Camera::new(Matrix3::identity(), Vector3::zeros(), 16.0, 16.0, 16.0, 16.0, 32, 32).unwrap();
    let mesh = Mesh::new(
        vec![[-10.0, -10.0, 2.0], [30.0, -10.0, 2.0], [-10.0, 30.0, 2.0]],
        vec![[0, 1, 2]],
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    )
    .unwrap();
    let c = [0.2, 0.4, 0.9];
    let (rgb, alpha) = render_ground_truth(&mesh, &flat(c), &cam);
    for y in 0..32 {
        for x in 0..32 {
            assert_eq!(rgb.pixel(x, y), &c);
            assert_eq!(alpha.get(x, y, 0), 1.0);
        }
    }
}

#[test]
fn geometry_behind_camera_is_invisible() {
    let cam = Camera::new(Matrix3::identity(), Vector3::zeros(), 16.0, 16.0, 16.0, 16.0, 32, 32).unwrap();
    let mesh = Mesh::new(
        vec![[-10.0, -10.0, -2.0], [-10.0, 30.0, -2.0], [30.0, -10.0, -2.0]],
        vec![[0, 1, 2]],
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    )
    .unwrap();
    let (rgb, alpha) = render_ground_truth(&mesh, &flat([1.0; 3]), &cam);
    assert!(rgb.data().iter().all(|&v| v == 0.0));
    assert!(alpha.data().iter().all(|&v| v == 0.0));
}

#[test]
fn silhouette_shrinks_with_distance() {
    let model = ToyHeadModel::new(Default::default());
    let id = splat_avatar::geometry::sample_identity(5, &model);
    let mesh = model.ground_truth_mesh(&id, &[0.0; 6], &Rigid::identity()).unwrap();
    let mut last = f64::INFINITY;
    for r in [3.0, 3.5, 4.0, 5.0, 6.0, 8.0] {
        let cfg = DatasetConfig { camera_radius: r, ..DatasetConfig::default() };
        let (_, alpha) = render_ground_truth(&mesh, &HeadTexture { identity: &id }, &cfg.camera(30.0, 10.0).unwrap());
        let area: f64 = alpha.data().iter().sum();
        assert!(area < last, "radius {r}: {area} !< {last}");
        assert!(area > 0.0);
        last = area;
    }
}

#[test]
fn default_sizes() {
    let cfg = DatasetConfig::default();
    assert_eq!(cfg.total_samples(), 1500);
    let full = DatasetConfig { n_identities: 1000, images_per_identity: 50, ..cfg };
    assert_eq!(full.total_samples(), 50_000);
}

#[test]
fn dataset_is_deterministic_and_roundtrips() {
    let cfg = small_cfg();
    let a = build_dataset(&cfg).unwrap();
    let b = build_dataset(&cfg).unwrap();
    assert_eq!(a.samples.len(), 120);
    assert_eq!(serde_json::to_string(&a.manifest).unwrap(), serde_json::to_string(&b.manifest).unwrap());

    let dir = tempfile::tempdir().unwrap();
    write_dataset(&a, dir.path()).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded.manifest, a.manifest);
    for (x, y) in loaded.samples.iter().zip(&a.samples) {
        assert_eq!(x.rgb, y.rgb);
        assert_eq!(x.alpha, y.alpha);
    }
    // labels survive serialization
    for (i, rec) in loaded.manifest.identities.iter().enumerate() {
        assert_eq!(rec.params.hair_length, a.identity(i).unwrap().hair_length);
        assert_eq!(rec.params.hair_color, a.identity(i).unwrap().hair_color);
    }
    // stored annotations re-render to the stored pixels
    let model = &loaded.manifest.head_model;
    for s in loaded.samples.iter().step_by(7) {
        let id = loaded.identity(s.record.identity).unwrap();
        let (rgb, alpha) = render_record(model, id, &s.record).unwrap();
        assert_eq!(rgb, s.rgb);
        assert_eq!(alpha, s.alpha);
    }
    // every identity is seen from nearly all around
    for id in 0..cfg.n_identities {
        let az: Vec<f64> = a.samples_of(id).map(|s| s.record.azimuth_deg).collect();
        let span = az.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - az.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(span >= 300.0);
    }
    assert!(a.samples.iter().all(|s| s.alpha.data().iter().all(|&v| (0.0..=1.0).contains(&v))));
}

#[test]
fn invalid_config_rejected() {
    let bad = DatasetConfig { elevation_range: [45.0, -20.0], ..DatasetConfig::default() };
    assert!(build_dataset(&bad).is_err());
    let bad = DatasetConfig { n_identities: 0, ..DatasetConfig::default() };
    assert!(bad.validate().is_err());
}
