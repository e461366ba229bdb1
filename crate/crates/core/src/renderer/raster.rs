//! Tiled front-to-back alpha compositing and its reverse-mode pass.

use rayon::prelude::*;

use super::camera::Camera;
use super::project::{ProjectedGaussian, ScreenGradient};
use super::TRANSMITTANCE_MIN;
use crate::error::{ensure_len, Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterSettings {
    pub tile_size: usize,
    pub background: [f64; 3],
}

impl Default for RasterSettings {
    fn default() -> Self {
        Self {
            tile_size: super::DEFAULT_TILE_SIZE,
            background: [0.0; 3],
        }
    }
}

/// Everything the reverse pass needs to replay a forward rasterization.
#[derive(Clone, Debug)]
pub struct RasterState {
    pub(crate) projected: Vec<ProjectedGaussian>,
    pub(crate) colors: Vec<[f64; 3]>,
    pub(crate) alphas: Vec<f64>,
    pub(crate) settings: RasterSettings,
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) tiles_x: usize,
    pub(crate) tiles_y: usize,
    /// Gaussian ids, grouped by tile, front to back within a tile.
    pub(crate) sorted: Vec<u32>,
    /// `sorted[ranges[t]..ranges[t + 1]]` belongs to tile `t`.
    pub(crate) ranges: Vec<usize>,
    /// Per pixel, how many entries of its tile list were visited.
    pub(crate) list_end: Vec<u32>,
}

impl RasterState {
    pub fn projected(&self) -> &[ProjectedGaussian] {
        &self.projected
    }
}

#[derive(Clone, Debug)]
pub struct RenderTarget {
    pub rgb: Image,
    pub alpha: Image,
    /// Number of Gaussians that contributed to each pixel.
    pub n_contrib: Vec<u32>,
    pub final_transmittance: Vec<f64>,
    pub state: Option<RasterState>,
}

impl RenderTarget {
    pub(crate) fn blank(width: usize, height: usize) -> Self {
        Self {
            rgb: Image::new(width, height, 3),
            alpha: Image::new(width, height, 1),
            n_contrib: vec![0; width * height],
            final_transmittance: vec![1.0; width * height],
            state: None,
        }
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    /// Drops the reverse-pass state.
    pub fn detach(mut self) -> Self {
        self.state = None;
        self
    }
}

/// Per-pixel alpha of Gaussian `p` at pixel center `(x, y)`, or `None` when
/// it falls below the contribution threshold. Returns
/// `(alpha_i, falloff, dx, dy)`.
#[inline]
pub(crate) fn pixel_alpha(p: &ProjectedGaussian, alpha: f64, x: f64, y: f64) -> Option<(f64, f64, f64, f64)> {
    let dx = x - p.mean[0];
    let dy = y - p.mean[1];
    let [a, b, c] = p.conic;
    let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
    if q > p.q_max || q < 0.0 {
        return None;
    }
    let falloff = (-0.5 * q).exp();
    Some((alpha * falloff, falloff, dx, dy))
}

pub(crate) struct PixelResult {
    pub rgb: [f64; 3],
    pub transmittance: f64,
    pub n_contrib: u32,
    pub list_end: u32,
}

/// Front-to-back compositing of `order` at one pixel.
#[inline]
pub(crate) fn composite_pixel(
    order: &[u32],
    projected: &[ProjectedGaussian],
    colors: &[[f64; 3]],
    alphas: &[f64],
    x: f64,
    y: f64,
    background: [f64; 3],
) -> PixelResult {
    let mut t = 1.0;
    let mut c = [0.0; 3];
    let mut n = 0u32;
    let mut end = order.len() as u32;
    for (k, &id) in order.iter().enumerate() {
        let id = id as usize;
        let Some((a, ..)) = pixel_alpha(&projected[id], alphas[id], x, y) else {
            continue;
        };
        let w = a * t;
        let col = colors[id];
        c[0] += col[0] * w;
        c[1] += col[1] * w;
        c[2] += col[2] * w;
        t *= 1.0 - a;
        n += 1;
        if t < TRANSMITTANCE_MIN {
            end = k as u32 + 1;
            break;
        }
    }
    PixelResult {
        rgb: [
            c[0] + t * background[0],
            c[1] + t * background[1],
            c[2] + t * background[2],
        ],
        transmittance: t,
        n_contrib: n,
        list_end: end,
    }
}

fn check_inputs(projected: &[ProjectedGaussian], colors: &[[f64; 3]], alphas: &[f64], cam: &Camera) -> Result<()> {
    ensure_len("gaussian colors", projected.len(), colors.len())?;
    ensure_len("gaussian alphas", projected.len(), alphas.len())?;
    cam.validate()
}

/// Pixel range `[lo, hi)` whose centers may lie within `r` of `m`.
#[inline]
fn pixel_span(m: f64, r: f64, n: usize) -> Option<(usize, usize)> {
    let lo = (m - r - 0.5).floor() - 1.0;
    let hi = (m + r - 0.5).ceil() + 1.0;
    if hi < 0.0 || lo >= n as f64 {
        return None;
    }
    let lo = lo.max(0.0) as usize;
    let hi = (hi.min(n as f64 - 1.0) as usize) + 1;
    Some((lo, hi))
}

/// Tiled forward pass. Colors and alphas are post-activation.
pub fn rasterize(
    projected: &[ProjectedGaussian],
    colors: &[[f64; 3]],
    alphas: &[f64],
    cam: &Camera,
    settings: &RasterSettings,
) -> Result<RenderTarget> {
    check_inputs(projected, colors, alphas, cam)?;
    if settings.tile_size == 0 {
        return Err(Error::InvalidArgument("tile size must be at least 1".into()));
    }
    let (width, height, ts) = (cam.width, cam.height, settings.tile_size);
    let tiles_x = width.div_ceil(ts);
    let tiles_y = height.div_ceil(ts);

    let mut keys: Vec<(u32, f64, u32)> = Vec::new();
    for (i, p) in projected.iter().enumerate() {
        if p.skipped {
            continue;
        }
        let (Some((x0, x1)), Some((y0, y1))) = (
            pixel_span(p.mean[0], p.radius, width),
            pixel_span(p.mean[1], p.radius, height),
        ) else {
            continue;
        };
        for ty in y0 / ts..=(y1 - 1) / ts {
            for tx in x0 / ts..=(x1 - 1) / ts {
                keys.push(((ty * tiles_x + tx) as u32, p.depth, i as u32));
            }
        }
    }
    keys.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n_tiles = tiles_x * tiles_y;
    let mut ranges = vec![0usize; n_tiles + 1];
    for k in &keys {
        ranges[k.0 as usize + 1] += 1;
    }
    for t in 0..n_tiles {
        ranges[t + 1] += ranges[t];
    }
    let sorted: Vec<u32> = keys.into_iter().map(|k| k.2).collect();

    let tiles: Vec<Vec<(usize, PixelResult)>> = (0..n_tiles)
        .into_par_iter()
        .map(|tile| {
            let (tx, ty) = (tile % tiles_x, tile / tiles_x);
            let list = &sorted[ranges[tile]..ranges[tile + 1]];
            let mut out = Vec::with_capacity(ts * ts);
            for py in ty * ts..((ty + 1) * ts).min(height) {
                for px in tx * ts..((tx + 1) * ts).min(width) {
                    let r = composite_pixel(
                        list,
                        projected,
                        colors,
                        alphas,
                        px as f64 + 0.5,
                        py as f64 + 0.5,
                        settings.background,
                    );
                    out.push((py * width + px, r));
                }
            }
            out
        })
        .collect();

    let mut target = RenderTarget::blank(width, height);
    let mut list_end = vec![0u32; width * height];
    for tile in tiles {
        for (pix, r) in tile {
            target.rgb.data_mut()[3 * pix..3 * pix + 3].copy_from_slice(&r.rgb);
            target.alpha.data_mut()[pix] = 1.0 - r.transmittance;
            target.n_contrib[pix] = r.n_contrib;
            target.final_transmittance[pix] = r.transmittance;
            list_end[pix] = r.list_end;
        }
    }
    target.state = Some(RasterState {
        projected: projected.to_vec(),
        colors: colors.to_vec(),
        alphas: alphas.to_vec(),
        settings: *settings,
        width,
        height,
        tiles_x,
        tiles_y,
        sorted,
        ranges,
        list_end,
    });
    Ok(target)
}

/// Reverse pass of [`rasterize`]: per-Gaussian gradients of screen-space
/// quantities given upstream gradients on rgb (3 channels) and alpha.
pub fn rasterize_backward(target: &RenderTarget, d_rgb: &Image, d_alpha: &Image) -> Result<Vec<ScreenGradient>> {
    let state = target
        .state
        .as_ref()
        .ok_or(Error::MissingForwardState("rasterize_backward"))?;
    let (width, height) = (state.width, state.height);
    let shape = |img: &Image, ch: usize, what: &'static str| -> Result<()> {
        if img.width() != width || img.height() != height || img.channels() != ch {
            return Err(Error::DimensionMismatch {
                what,
                expected: width * height * ch,
                got: img.width() * img.height() * img.channels(),
            });
        }
        Ok(())
    };
    shape(d_rgb, 3, "rgb gradient")?;
    shape(d_alpha, 1, "alpha gradient")?;

    let ts = state.settings.tile_size;
    let bg = state.settings.background;
    let n_tiles = state.tiles_x * state.tiles_y;
    let per_tile: Vec<Vec<ScreenGradient>> = (0..n_tiles)
        .into_par_iter()
        .map(|tile| {
            let (tx, ty) = (tile % state.tiles_x, tile / state.tiles_x);
            let list = &state.sorted[state.ranges[tile]..state.ranges[tile + 1]];
            let mut grads = vec![ScreenGradient::default(); list.len()];
            // (list position, alpha_i, falloff, dx, dy, transmittance before)
            let mut replay: Vec<(usize, f64, f64, f64, f64, f64)> = Vec::new();
            for py in ty * ts..((ty + 1) * ts).min(height) {
                for px in tx * ts..((tx + 1) * ts).min(width) {
                    let pix = py * width + px;
                    let g = [d_rgb.data()[3 * pix], d_rgb.data()[3 * pix + 1], d_rgb.data()[3 * pix + 2]];
                    let ga = d_alpha.data()[pix];
                    if g == [0.0; 3] && ga == 0.0 {
                        continue;
                    }
                    let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
                    replay.clear();
                    let mut t = 1.0;
                    for (k, &id) in list[..state.list_end[pix] as usize].iter().enumerate() {
                        let id = id as usize;
                        if let Some((a, f, dx, dy)) = pixel_alpha(&state.projected[id], state.alphas[id], x, y) {
                            replay.push((k, a, f, dx, dy, t));
                            t *= 1.0 - a;
                        }
                    }
                    let mut g_t = g[0] * bg[0] + g[1] * bg[1] + g[2] * bg[2] - ga;
                    for &(k, a, f, dx, dy, t_i) in replay.iter().rev() {
                        let id = list[k] as usize;
                        let c = state.colors[id];
                        let gc = g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
                        let d_a = (gc - g_t) * t_i;
                        g_t = gc * a + g_t * (1.0 - a);

                        let out = &mut grads[k];
                        let w = a * t_i;
                        out.color[0] += g[0] * w;
                        out.color[1] += g[1] * w;
                        out.color[2] += g[2] * w;
                        out.alpha += d_a * f;
                        let d_q = -0.5 * d_a * state.alphas[id] * f;
                        let [ca, cb, cc] = state.projected[id].conic;
                        out.mean[0] -= d_q * 2.0 * (ca * dx + cb * dy);
                        out.mean[1] -= d_q * 2.0 * (cb * dx + cc * dy);
                        out.conic[0] += d_q * dx * dx;
                        out.conic[1] += d_q * 2.0 * dx * dy;
                        out.conic[2] += d_q * dy * dy;
                    }
                }
            }
            grads
        })
        .collect();

    let mut out = vec![ScreenGradient::default(); state.projected.len()];
    for (tile, grads) in per_tile.iter().enumerate() {
        let list = &state.sorted[state.ranges[tile]..state.ranges[tile + 1]];
        for (&id, g) in list.iter().zip(grads) {
            out[id as usize].accumulate(g);
        }
    }
    Ok(out)
}

/// Reference compositor: every pixel visits every Gaussian in global
/// (depth, index) order, with no tiling and no footprint culling.
pub fn render_brute_force(
    projected: &[ProjectedGaussian],
    colors: &[[f64; 3]],
    alphas: &[f64],
    cam: &Camera,
    settings: &RasterSettings,
) -> Result<RenderTarget> {
    check_inputs(projected, colors, alphas, cam)?;
    let mut order: Vec<u32> = (0..projected.len() as u32)
        .filter(|&i| !projected[i as usize].skipped)
        .collect();
    order.sort_by(|&a, &b| {
        projected[a as usize]
            .depth
            .total_cmp(&projected[b as usize].depth)
            .then(a.cmp(&b))
    });
    let (width, height) = (cam.width, cam.height);
    let mut target = RenderTarget::blank(width, height);
    for py in 0..height {
        for px in 0..width {
            let pix = py * width + px;
            let r = composite_pixel(
                &order,
                projected,
                colors,
                alphas,
                px as f64 + 0.5,
                py as f64 + 0.5,
                settings.background,
            );
            target.rgb.data_mut()[3 * pix..3 * pix + 3].copy_from_slice(&r.rgb);
            target.alpha.data_mut()[pix] = 1.0 - r.transmittance;
            target.n_contrib[pix] = r.n_contrib;
            target.final_transmittance[pix] = r.transmittance;
        }
    }
    Ok(target)
}
