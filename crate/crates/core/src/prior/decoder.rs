//! Branching MLP with weight-normalized layers and a hand-written reverse
//! pass, batched over Gaussians.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::renderer::AttributeGroup;

pub const FEATURE_DIM: usize = 8;
pub const TRUNK_DEPTH: usize = 6;
/// Total width of the decoded offsets: position 3, scale 3, rotation 4,
/// color 3, opacity 1.
pub const OFFSET_DIM: usize = 14;

/// `y = x·Wᵀ + b` with `W[r] = g[r]·v[r] / ‖v[r]‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct WnLinear {
    pub v: Array2<f64>,
    pub g: Array1<f64>,
    pub b: Array1<f64>,
}

impl WnLinear {
    fn random(rng: &mut impl Rng, fan_in: usize, fan_out: usize, gain: f64) -> Self {
        let normal = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("finite std");
        let v = Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(rng));
        let g = v.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        Self {
            v,
            g,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.v.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.v.nrows()
    }

    pub fn weight(&self) -> Array2<f64> {
        let mut w = self.v.clone();
        for (mut row, &g) in w.rows_mut().into_iter().zip(&self.g) {
            let n = row.dot(&row).sqrt();
            let f = if n > 0.0 { g / n } else { 0.0 };
            row.mapv_inplace(|x| x * f);
        }
        w
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight().t()) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut WnLinear) -> Array2<f64> {
        let dw = dy.t().dot(&x);
        grad.b += &dy.sum_axis(Axis(0));
        for r in 0..self.fan_out() {
            let v = self.v.row(r);
            let n = v.dot(&v).sqrt();
            if n == 0.0 {
                continue;
            }
            let dwr = dw.row(r);
            let proj = dwr.dot(&v) / n;
            grad.g[r] += proj;
            let f = self.g[r] / n;
            let mut gv = grad.v.row_mut(r);
            for c in 0..v.len() {
                gv[c] += f * (dwr[c] - proj * v[c] / n);
            }
        }
        dy.dot(&self.weight())
    }

    fn zeros_like(&self) -> Self {
        Self {
            v: Array2::zeros(self.v.raw_dim()),
            g: Array1::zeros(self.g.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub hidden: WnLinear,
    pub out: WnLinear,
}

/// Trunk of [`TRUNK_DEPTH`] layers followed by one branch per attribute
/// group. The same type stores parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub trunk: Vec<WnLinear>,
    pub heads: Vec<Head>,
}

/// Activations kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct DecoderCache {
    input: Array2<f64>,
    /// Post-activation output of each trunk layer.
    trunk: Vec<Array2<f64>>,
    /// Post-activation hidden output of each head.
    heads: Vec<Array2<f64>>,
}

impl DecoderCache {
    pub fn rows(&self) -> usize {
        self.input.nrows()
    }
}

fn relu(mut a: Array2<f64>) -> Array2<f64> {
    a.mapv_inplace(|x| x.max(0.0));
    a
}

fn relu_mask(mut dy: Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    dy.zip_mut_with(y, |d, &a| {
        if a <= 0.0 {
            *d = 0.0
        }
    });
    dy
}

impl Decoder {
    /// Fan-in scaled random trunk and head layers; final projections have
    /// zero magnitude and bias so the initial output is exactly zero.
    pub fn new(rng: &mut impl Rng, code_dim: usize, hidden: usize) -> Self {
        let relu_gain = std::f64::consts::SQRT_2;
        let mut trunk = Vec::with_capacity(TRUNK_DEPTH);
        let mut fan_in = FEATURE_DIM + code_dim;
        for _ in 0..TRUNK_DEPTH {
            trunk.push(WnLinear::random(rng, fan_in, hidden, relu_gain));
            fan_in = hidden;
        }
        let heads = AttributeGroup::ALL
            .iter()
            .map(|g| {
                let hidden_layer = WnLinear::random(rng, hidden, hidden, relu_gain);
                let mut out = WnLinear::random(rng, hidden, g.arity(), 1.0);
                out.g.fill(0.0);
                Head { hidden: hidden_layer, out }
            })
            .collect();
        Self { trunk, heads }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk[0].fan_in()
    }

    pub fn code_dim(&self) -> usize {
        self.input_dim() - FEATURE_DIM
    }

    pub fn hidden_dim(&self) -> usize {
        self.trunk[0].fan_out()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            trunk: self.trunk.iter().map(WnLinear::zeros_like).collect(),
            heads: self
                .heads
                .iter()
                .map(|h| Head {
                    hidden: h.hidden.zeros_like(),
                    out: h.out.zeros_like(),
                })
                .collect(),
        }
    }

    fn layers(&self) -> Vec<&WnLinear> {
        let mut v: Vec<&WnLinear> = self.trunk.iter().collect();
        for h in &self.heads {
            v.push(&h.hidden);
            v.push(&h.out);
        }
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut WnLinear> {
        let mut v: Vec<&mut WnLinear> = self.trunk.iter_mut().collect();
        for h in &mut self.heads {
            v.push(&mut h.hidden);
            v.push(&mut h.out);
        }
        v
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|l| {
                [
                    l.v.as_slice().expect("standard layout"),
                    l.g.as_slice().expect("standard layout"),
                    l.b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| {
                [
                    l.v.as_slice_mut().expect("standard layout"),
                    l.g.as_slice_mut().expect("standard layout"),
                    l.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunk.len() != TRUNK_DEPTH || self.heads.len() != AttributeGroup::ALL.len() {
            return Err(Error::InvalidArgument("decoder has the wrong number of layers".into()));
        }
        let h = self.hidden_dim();
        for (i, l) in self.trunk.iter().enumerate() {
            let expect_in = if i == 0 { self.input_dim() } else { h };
            if l.fan_in() != expect_in || l.fan_out() != h || l.g.len() != h || l.b.len() != h {
                return Err(Error::InvalidArgument(format!("trunk layer {i} has inconsistent shape")));
            }
        }
        for (hd, g) in self.heads.iter().zip(AttributeGroup::ALL) {
            if hd.hidden.fan_in() != h || hd.hidden.fan_out() != h || hd.out.fan_in() != h || hd.out.fan_out() != g.arity() {
                return Err(Error::InvalidArgument(format!("{} head has inconsistent shape", g.name())));
            }
            if hd.hidden.g.len() != h || hd.hidden.b.len() != h || hd.out.g.len() != g.arity() || hd.out.b.len() != g.arity() {
                return Err(Error::InvalidArgument(format!("{} head has inconsistent shape", g.name())));
            }
        }
        Ok(())
    }

    /// Decodes each row of `input` (`[feature, code]`) to a 14-wide offset
    /// row.
    pub fn forward(&self, input: Array2<f64>) -> Result<(Array2<f64>, DecoderCache)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "decoder input width",
                expected: self.input_dim(),
                got: input.ncols(),
            });
        }
        let mut trunk = Vec::with_capacity(TRUNK_DEPTH);
        let mut x = input.view().to_owned();
        for l in &self.trunk {
            x = relu(l.forward(x.view()));
            trunk.push(x.clone());
        }
        let mut out = Array2::zeros((input.nrows(), OFFSET_DIM));
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut col = 0;
        for h in &self.heads {
            let hid = relu(h.hidden.forward(x.view()));
            let y = h.out.forward(hid.view());
            out.slice_mut(s![.., col..col + y.ncols()]).assign(&y);
            col += y.ncols();
            heads.push(hid);
        }
        Ok((out, DecoderCache { input, trunk, heads }))
    }

    /// Reverse pass. Parameter gradients are accumulated into `grad`; the
    /// return value is `dL/d input`.
    pub fn backward(&self, cache: &DecoderCache, d_out: ArrayView2<f64>, grad: &mut Decoder) -> Result<Array2<f64>> {
        if d_out.nrows() != cache.rows() || d_out.ncols() != OFFSET_DIM {
            return Err(Error::DimensionMismatch {
                what: "decoder output gradient",
                expected: cache.rows() * OFFSET_DIM,
                got: d_out.len(),
            });
        }
        let last = cache.trunk.last().expect("non-empty trunk");
        let mut d_trunk = Array2::zeros(last.raw_dim());
        let mut col = 0;
        for (k, h) in self.heads.iter().enumerate() {
            let w = h.out.fan_out();
            let dy = d_out.slice(s![.., col..col + w]);
            col += w;
            let d_hid = h.out.backward(cache.heads[k].view(), dy, &mut grad.heads[k].out);
            let d_hid = relu_mask(d_hid, &cache.heads[k]);
            d_trunk += &h.hidden.backward(last.view(), d_hid.view(), &mut grad.heads[k].hidden);
        }
        let mut d = d_trunk;
        for i in (0..TRUNK_DEPTH).rev() {
            d = relu_mask(d, &cache.trunk[i]);
            let x = if i == 0 { cache.input.view() } else { cache.trunk[i - 1].view() };
            d = self.trunk[i].backward(x, d.view(), &mut grad.trunk[i]);
        }
        Ok(d)
    }
}
