//! Throughput measurements for posing and full rendering.

use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TriangleFrame;
use crate::renderer::{pose_gaussians, render, Camera, LocalGaussianSet, RasterSettings};

/// Reference throughput of the full avatar at inference time, frames/s.
pub const REFERENCE_RENDER_FPS: f64 = 70.0;
/// Reference CPU posing throughput at [`REFERENCE_GAUSSIANS`], poses/s.
pub const REFERENCE_POSING_FPS: f64 = 67.0;
pub const REFERENCE_GAUSSIANS: usize = 187_779;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub kind: String,
    pub n_gaussians: usize,
    pub repetitions: usize,
    pub threads: usize,
    pub median_s: f64,
    pub p95_s: f64,
    /// Operations per second at the median time.
    pub per_second: f64,
    pub reference_per_second: f64,
    pub reference_gaussians: usize,
}

/// Random Gaussians, each bound to its own random frame.
pub fn random_bench_scene(n: usize, seed: u64) -> (LocalGaussianSet, Vec<TriangleFrame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locals = LocalGaussianSet::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let origin = dir.try_normalize(1e-9).unwrap_or(Vector3::z());
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let rot = UnitQuaternion::from_scaled_axis(axis * 1.5);
        frames.push(TriangleFrame::new(origin, rot, rng.random_range(0.02..0.05)));
        let q = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let mut mu = [0.0; 3];
        mu.iter_mut().for_each(|m| *m = rng.random_range(-0.5..0.5));
        let mut ls = [0.0; 3];
        ls.iter_mut().for_each(|s| *s = rng.random_range(-1.0..0.5));
        let mut c = [0.0; 3];
        c.iter_mut().for_each(|x| *x = rng.random_range(0.0..1.0));
        locals.push(mu, ls, crate::renderer::normalize_quat(q), c, rng.random_range(-2.0..4.0), i as u32);
    }
    (locals, frames)
}

fn summarize(kind: &str, n: usize, mut times: Vec<f64>, reference: f64) -> BenchReport {
    times.sort_by(f64::total_cmp);
    let pick = |p: f64| times[((times.len() - 1) as f64 * p).round() as usize];
    let median = pick(0.5);
    BenchReport {
        kind: kind.to_string(),
        n_gaussians: n,
        repetitions: times.len(),
        threads: rayon::current_num_threads(),
        median_s: median,
        p95_s: pick(0.95),
        per_second: 1.0 / median.max(1e-12),
        reference_per_second: reference,
        reference_gaussians: REFERENCE_GAUSSIANS,
    }
}

fn time<F: FnMut() -> Result<()>>(repetitions: usize, warmup: usize, mut f: F) -> Result<Vec<f64>> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one repetition".into()));
    }
    for _ in 0..warmup {
        f()?;
    }
    (0..repetitions)
        .map(|_| {
            let t = Instant::now();
            f()?;
            Ok(t.elapsed().as_secs_f64())
        })
        .collect()
}

/// Times posing `n` random Gaussians.
pub fn bench_posing(n: usize, repetitions: usize, seed: u64) -> Result<BenchReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one Gaussian".into()));
    }
    let (locals, frames) = random_bench_scene(n, seed);
    let times = time(repetitions, 2, || pose_gaussians(&locals, &frames).map(drop))?;
    Ok(summarize("posing", n, times, REFERENCE_POSING_FPS))
}

/// Times posing, projection and rasterization of a scene from one camera.
pub fn bench_render(
    locals: &LocalGaussianSet,
    frames: &[TriangleFrame],
    cam: &Camera,
    settings: &RasterSettings,
    repetitions: usize,
) -> Result<BenchReport> {
    let times = time(repetitions, 1, || render(locals, frames, cam, settings).map(drop))?;
    Ok(summarize("render", locals.len(), times, REFERENCE_RENDER_FPS))
}
