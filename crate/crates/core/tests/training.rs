#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use splat_avatar::image::Image;
use splat_avatar::renderer::*;
use splat_avatar::training::*;

fn rand_unit_image(seed: u64, w: usize, h: usize, ch: usize) -> Image {
    let mut r = rng(seed);
    let data = (0..w * h * ch).map(|_| r.random_range(0.0..1.0)).collect();
    Image::from_vec(w, h, ch, data).unwrap()
}

/// Straight 2D-window SSIM, no separability and no shared buffers.
fn ssim_oracle(x: &Image, y: &Image) -> f64 {
    let mut k = [[0.0; 11]; 11];
    let mut sum = 0.0;
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (da, db) = (a as f64 - 5.0, b as f64 - 5.0);
            *v = (-(da * da + db * db) / (2.0 * 1.5 * 1.5)).exp();
            sum += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0.0;
    for c in 0..x.channels() {
        for oy in 0..=x.height() - 11 {
            for ox in 0..=x.width() - 11 {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for a in 0..11 {
                    for b in 0..11 {
                        let w = k[a][b] / sum;
                        let (p, q) = (x.get(ox + b, oy + a, c), y.get(ox + b, oy + a, c));
                        mx += w * p;
                        my += w * q;
                        xx += w * p * p;
                        yy += w * q * q;
                        xy += w * p * q;
                    }
                }
                let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                total += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
    }
    total / count
}

#[test]
fn l1_examples() {
    let a = rand_unit_image(1, 8, 6, 3);
    assert_eq!(l1_loss(&a, &a).unwrap().0, 0.0);
    let mut b = a.clone();
    b.data_mut().iter_mut().for_each(|v| *v += 0.5);
    assert!((l1_loss(&b, &a).unwrap().0 - 0.5).abs() < 1e-15);
    let c = rand_unit_image(2, 8, 6, 3);
    let oracle: f64 = a.data().iter().zip(c.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 144.0;
    assert!((l1_loss(&a, &c).unwrap().0 - oracle).abs() < 1e-14);
    assert!(l1_loss(&a, &Image::new(8, 6, 1)).is_err());
}

#[test]
fn alpha_examples() {
    let a = rand_unit_image(3, 8, 8, 1);
    assert_eq!(alpha_loss(&a, &a).unwrap().0, 0.0);
    let mut b = a.clone();
    b.data_mut().iter_mut().for_each(|v| *v -= 0.25);
    assert!((alpha_loss(&b, &a).unwrap().0 - 0.25).abs() < 1e-15);
    let c = rand_unit_image(4, 8, 8, 1);
    let oracle: f64 = a.data().iter().zip(c.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 64.0;
    assert!((alpha_loss(&a, &c).unwrap().0 - oracle).abs() < 1e-14);
    assert!(alpha_loss(&rand_unit_image(5, 8, 8, 3), &rand_unit_image(6, 8, 8, 3)).is_err());
}

#[test]
fn ssim_examples() {
    let a = rand_unit_image(7, 16, 16, 3);
    assert!(ssim_loss(&a, &a).unwrap().0.abs() < 1e-12);
    let mut inv = a.clone();
    inv.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
    assert!(ssim(&inv, &a).unwrap().0 < 0.5);
    let b = rand_unit_image(8, 19, 14, 3);
    let c = rand_unit_image(9, 19, 14, 3);
    assert!((ssim(&b, &c).unwrap().0 - ssim_oracle(&b, &c)).abs() < 1e-12);
    assert!(ssim(&rand_unit_image(1, 10, 16, 1), &rand_unit_image(2, 10, 16, 1)).is_err());
}

#[test]
fn ssim_gradient_matches_finite_differences() {
    let h = 1e-4;
    for seed in 0..3 {
        let x = rand_unit_image(10 + seed, 16, 16, 3);
        let y = rand_unit_image(20 + seed, 16, 16, 3);
        let (_, g) = ssim_loss(&x, &y).unwrap();
        for i in 0..x.data().len() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let up = ssim_loss(&p, &y).unwrap().0;
            p.data_mut()[i] -= 2.0 * h;
            let down = ssim_loss(&p, &y).unwrap().0;
            let n = (up - down) / (2.0 * h);
            assert!(rel_err(g.data()[i], n, 1e-6) <= 1e-3, "seed {seed} idx {i}: {} vs {n}", g.data()[i]);
        }
    }
}

fn one_gaussian(mu: [f64; 3], log_scale: [f64; 3]) -> LocalGaussianSet {
    let mut s = LocalGaussianSet::default();
    s.push(mu, log_scale, [1.0, 0.0, 0.0, 0.0], [0.5; 3], 0.0, 0);
    s
}

#[test]
fn reg_below_threshold_is_flat() {
    let mut s = one_gaussian([0.0; 3], [(0.5f64).ln(), (0.1f64).ln(), (0.3f64).ln()]);
    s.push([0.0; 3], [-3.0; 3], [1.0, 0.0, 0.0, 0.0], [0.5; 3], 0.0, 0);
    let w = LossWeights::default();
    let (v, g) = reg_loss(&s, &[false, false], &w).unwrap();
    assert!((v - (3.0f64 * 0.36).sqrt()).abs() < 1e-12);
    assert_eq!(g.max_abs(), 0.0);
}

#[test]
fn reg_unit_scale_is_sqrt3() {
    let s = one_gaussian([0.0; 3], [0.0; 3]);
    let w = LossWeights { lambda_sigma: 1.0, lambda_mu: 0.0, ..LossWeights::default() };
    let (v, _) = reg_loss(&s, &[false], &w).unwrap();
    assert!((v - 3f64.sqrt()).abs() < 1e-14);
}

#[test]
fn scalp_displacement_ratio() {
    let mut s = one_gaussian([0.3, -0.2, 0.1], [-2.0; 3]);
    s.push([0.3, -0.2, 0.1], [-2.0; 3], [1.0, 0.0, 0.0, 0.0], [0.5; 3], 0.0, 0);
    let (_, g) = reg_loss(&s, &[true, false], &LossWeights::default()).unwrap();
    for a in 0..3 {
        assert!((g.mu[0][a] / g.mu[1][a] - 0.01).abs() < 1e-12);
    }
    assert!(reg_loss(&s, &[true], &LossWeights::default()).is_err());
}

#[test]
fn prior_reg_examples() {
    let mut r = rng(5);
    let (a, _) = random_local_scene(&mut r, 6, 2);
    assert_eq!(prior_reg_loss(&a, &a).unwrap().0, 0.0);
    let one = one_gaussian([0.0; 3], [0.0; 3]);
    let mut moved = one.clone();
    moved.opacity_logit[0] = 0.7;
    assert!((prior_reg_loss(&moved, &one).unwrap().0 - 0.49).abs() < 1e-15);
    let (b, _) = random_local_scene(&mut r, 6, 2);
    let (_, g) = prior_reg_loss(&a, &b).unwrap();
    let h = 1e-6;
    for grp in AttributeGroup::ALL {
        for k in 0..a.group(grp).len() {
            let mut p = a.clone();
            p.group_mut(grp)[k] += h;
            let up = prior_reg_loss(&p, &b).unwrap().0;
            p.group_mut(grp)[k] -= 2.0 * h;
            let down = prior_reg_loss(&p, &b).unwrap().0;
            let n = (up - down) / (2.0 * h);
            assert!(rel_err(g.group(grp)[k], n, 1e-8) < 1e-6);
            let expect = 2.0 * (a.group(grp)[k] - b.group(grp)[k]) / 6.0;
            assert!((g.group(grp)[k] - expect).abs() < 1e-15);
        }
    }
    assert!(prior_reg_loss(&a, &one).is_err());
}

#[test]
fn reg_gradient_matches_finite_differences() {
    let mut r = rng(8);
    let (mut s, _) = random_local_scene(&mut r, 12, 1);
    for ls in &mut s.log_scale {
        *ls = std::array::from_fn(|_| r.random_range(-1.5..0.5));
    }
    let mask: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
    let w = LossWeights::default();
    let (_, g) = reg_loss(&s, &mask, &w).unwrap();
    let h = 1e-6;
    for grp in [AttributeGroup::Position, AttributeGroup::LogScale] {
        for k in 0..s.group(grp).len() {
            let mut p = s.clone();
            p.group_mut(grp)[k] += h;
            let up = reg_loss(&p, &mask, &w).unwrap().0;
            p.group_mut(grp)[k] -= 2.0 * h;
            let down = reg_loss(&p, &mask, &w).unwrap().0;
            let n = (up - down) / (2.0 * h);
            assert!(rel_err(g.group(grp)[k], n, 1e-6) <= 1e-3);
        }
    }
}

struct HalfL1;

impl PerceptualScorer for HalfL1 {
    fn score(&self, pred: &Image, target: &Image) -> splat_avatar::Result<(f64, Image)> {
        let (v, mut g) = l1_loss(pred, target)?;
        g.data_mut().iter_mut().for_each(|x| *x *= 0.5);
        Ok((0.5 * v, g))
    }
}

fn scene_render(seed: u64) -> (LocalGaussianSet, RenderTarget) {
    let mut r = rng(seed);
    let (locals, frames) = random_local_scene(&mut r, 15, 3);
    let cam = axis_camera(16, 20.0);
    let t = render(&locals, &frames, &cam, &RasterSettings::default()).unwrap().target;
    (locals, t)
}

#[test]
fn total_is_weighted_sum_of_parts() {
    let (locals, t) = scene_render(11);
    let (anchor, _) = scene_render(12);
    let truth = rand_unit_image(13, 16, 16, 3);
    let truth_a = rand_unit_image(14, 16, 16, 1);
    let mask: Vec<bool> = (0..locals.len()).map(|i| i % 2 == 0).collect();
    let w = LossWeights { lambda_percep: 0.3, ..LossWeights::default() };
    let ctx = LossContext { weights: &w, scalp_mask: &mask, anchor: Some(&anchor), perceptual: Some(&HalfL1) };
    let out = total_loss(&t, &truth, &truth_a, &locals, &ctx).unwrap();
    let l1 = l1_loss(&t.rgb, &truth).unwrap().0;
    let ss = ssim_loss(&t.rgb, &truth).unwrap().0;
    let la = alpha_loss(&t.alpha, &truth_a).unwrap().0;
    let reg = reg_loss(&locals, &mask, &w).unwrap().0;
    let pr = prior_reg_loss(&locals, &anchor).unwrap().0;
    let expect = w.lambda_pix * (w.lambda_l1 * l1 + w.lambda_ssim * ss)
        + w.lambda_alpha * la
        + w.lambda_percep * 0.5 * l1
        + reg
        + w.lambda_prior * pr;
    assert!((out.total - expect).abs() <= 1e-10);
    assert!(out.total >= 0.0);
}

#[test]
fn total_zero_cases() {
    let (locals, t) = scene_render(15);
    let mask = vec![false; locals.len()];
    let w = LossWeights::zero();
    let ctx = LossContext { weights: &w, scalp_mask: &mask, anchor: Some(&locals), perceptual: None };
    let truth = rand_unit_image(16, 16, 16, 3);
    assert_eq!(total_loss(&t, &truth, &Image::new(16, 16, 1), &locals, &ctx).unwrap().total, 0.0);

    let w = LossWeights { lambda_sigma: 0.0, lambda_mu: 0.0, ..LossWeights::default() };
    let ctx = LossContext { weights: &w, scalp_mask: &mask, anchor: None, perceptual: None };
    let out = total_loss(&t, &t.rgb, &t.alpha, &locals, &ctx).unwrap();
    assert!(out.total.abs() < 1e-12);
}

#[test]
fn adam_zero_gradient_is_noop() {
    let mut p = vec![0.3, -1.0, 2.0];
    let mut s = AdamState::new(3, 0.1);
    adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
    assert_eq!(p, vec![0.3, -1.0, 2.0]);
    assert!(adam_step(&mut p, &[0.0; 2], &mut s).is_err());
}

#[test]
fn adam_first_step_moves_by_lr() {
    for g in [1e-3, 0.5, -7.0] {
        let mut p = vec![1.0; 4];
        let mut s = AdamState::new(4, 0.01);
        adam_step(&mut p, &[g; 4], &mut s).unwrap();
        for v in p {
            let step = (1.0 - v).abs();
            assert!((step - 0.01).abs() < 0.01 * 1e-4);
        }
    }
}

#[test]
fn adam_descends_quadratic() {
    let mut x = vec![1.0];
    let mut s = AdamState::new(1, 0.1);
    for _ in 0..100 {
        let g = [2.0 * x[0]];
        adam_step(&mut x, &g, &mut s).unwrap();
    }
    assert!(x[0].abs() < 0.1);
}

proptest! {
    #[test]
    fn adam_is_gradient_scale_invariant(g in prop::collection::vec(-10.0f64..10.0, 1..20), lr in 1e-4f64..1e-1) {
        let g: Vec<f64> = g.into_iter().map(|v| if v.abs() < 1e-3 { 1e-3 } else { v }).collect();
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let (mut a, mut b) = (vec![0.0; g.len()], vec![0.0; g.len()]);
        adam_step(&mut a, &g, &mut AdamState::new(g.len(), lr)).unwrap();
        adam_step(&mut b, &g2, &mut AdamState::new(g.len(), lr)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 0.01 * x.abs());
        }
    }

    #[test]
    fn losses_are_non_negative(seed in 0u64..1000) {
        let a = rand_unit_image(seed, 12, 12, 3);
        let b = rand_unit_image(seed + 1, 12, 12, 3);
        prop_assert!(l1_loss(&a, &b).unwrap().0 >= 0.0);
        prop_assert!(ssim_loss(&a, &b).unwrap().0 >= 0.0);
    }
}
