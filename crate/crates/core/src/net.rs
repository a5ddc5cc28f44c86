//! Score network: a small convolutional (or fully connected) net that maps
//! one input to one scalar score, with hand-written backpropagation.
//!
//! Image activations are stored height-major, channels last (`HWC`).
//! Convolutions use zero padding of `kernel / 2`. Convolution weights are
//! laid out `[out_channel][ky][kx][in_channel]`, affine weights `[out][in]`.
//!
//! ReLU uses subgradient 0 at 0. Spatial max pooling breaks ties toward the
//! lowest spatial index.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::ScorePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
    FeatureVector {
        dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        channels: usize,
        stride: usize,
    },
    Relu,
    SpatialMaxPool,
    Affine {
        out_dim: usize,
    },
}

impl LayerSpec {
    fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Affine { .. })
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { h, w, c } => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Spatial { h, w, c } => write!(f, "{h}x{w}x{c}"),
            Shape::Flat(n) => write!(f, "[{n}]"),
        }
    }
}

/// Layer plan of a score network. The first `backbone_layers` layers are the
/// part that stays frozen during the first training stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub input: InputKind,
    pub layers: Vec<LayerSpec>,
    pub backbone_layers: usize,
}

impl NetworkPlan {
    /// Three stride-2 conv+relu blocks as backbone, then a 3x3 and a 1x1
    /// convolution to 128 channels, relu, spatial max pool and one affine
    /// output.
    pub fn default_image(height: usize, width: usize, channels: usize) -> Self {
        let conv = |kernel, channels, stride| LayerSpec::Conv { kernel, channels, stride };
        NetworkPlan {
            input: InputKind::Image { height, width, channels },
            layers: vec![
                conv(3, 16, 2),
                LayerSpec::Relu,
                conv(3, 32, 2),
                LayerSpec::Relu,
                conv(3, 64, 2),
                LayerSpec::Relu,
                conv(3, 128, 1),
                conv(1, 128, 1),
                LayerSpec::Relu,
                LayerSpec::SpatialMaxPool,
                LayerSpec::Affine { out_dim: 1 },
            ],
            backbone_layers: 6,
        }
    }

    /// Two-hidden-layer MLP for precomputed feature vectors.
    pub fn default_feature(dim: usize) -> Self {
        NetworkPlan {
            input: InputKind::FeatureVector { dim },
            layers: vec![
                LayerSpec::Affine { out_dim: 64 },
                LayerSpec::Relu,
                LayerSpec::Affine { out_dim: 32 },
                LayerSpec::Relu,
                LayerSpec::Affine { out_dim: 1 },
            ],
            backbone_layers: 2,
        }
    }

    /// A single affine layer: `score = w . x + b`.
    pub fn linear(dim: usize) -> Self {
        NetworkPlan {
            input: InputKind::FeatureVector { dim },
            layers: vec![LayerSpec::Affine { out_dim: 1 }],
            backbone_layers: 0,
        }
    }

    pub fn input_shape(&self) -> Shape {
        match self.input {
            InputKind::Image { height, width, channels } => Shape::Spatial {
                h: height,
                w: width,
                c: channels,
            },
            InputKind::FeatureVector { dim } => Shape::Flat(dim),
        }
    }

    /// Output shape of every layer, validating the plan on the way.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let bad = |layer: usize, msg: &str| Error::Config(format!("layer {layer}: {msg}"));
        if self.layers.is_empty() {
            return Err(Error::Config("network plan has no layers".into()));
        }
        if self.backbone_layers > self.layers.len() {
            return Err(Error::Config("backbone_layers exceeds layer count".into()));
        }
        let mut shape = self.input_shape();
        if shape.is_empty() {
            return Err(Error::Config("input has zero size".into()));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut pools = 0;
        for (l, spec) in self.layers.iter().enumerate() {
            shape = match (*spec, shape) {
                (LayerSpec::Conv { kernel, channels, stride }, Shape::Spatial { h, w, .. }) => {
                    if kernel == 0 || channels == 0 || stride == 0 {
                        return Err(bad(l, "conv kernel, channels and stride must be positive"));
                    }
                    let pad = kernel / 2;
                    if h + 2 * pad < kernel || w + 2 * pad < kernel {
                        return Err(bad(l, "conv kernel larger than padded input"));
                    }
                    Shape::Spatial {
                        h: (h + 2 * pad - kernel) / stride + 1,
                        w: (w + 2 * pad - kernel) / stride + 1,
                        c: channels,
                    }
                }
                (LayerSpec::Conv { .. }, Shape::Flat(_)) => {
                    return Err(bad(l, "convolution needs a spatial input"))
                }
                (LayerSpec::Relu, s) => s,
                (LayerSpec::SpatialMaxPool, Shape::Spatial { c, .. }) => {
                    pools += 1;
                    Shape::Flat(c)
                }
                (LayerSpec::SpatialMaxPool, Shape::Flat(_)) => {
                    return Err(bad(l, "spatial max pool needs a spatial input"))
                }
                (LayerSpec::Affine { out_dim }, _) => {
                    if out_dim == 0 {
                        return Err(bad(l, "affine out_dim must be positive"));
                    }
                    Shape::Flat(out_dim)
                }
            };
            out.push(shape);
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Affine { out_dim: 1 })) {
            return Err(Error::Config("last layer must be affine with one output".into()));
        }
        if let InputKind::Image { .. } = self.input {
            let n = self.layers.len();
            if pools != 1 {
                return Err(Error::Config("image plans need exactly one spatial max pool".into()));
            }
            if n < 3 || self.layers[n - 2] != LayerSpec::SpatialMaxPool || self.layers[n - 3] != LayerSpec::Relu {
                return Err(Error::Config(
                    "image plans must end with relu -> spatial_max_pool -> affine(1)".into(),
                ));
            }
        }
        Ok(out)
    }
}

/// Weights and bias of one layer; both empty for parameter-free layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        LayerParams {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkParams {
    pub plan: NetworkPlan,
    pub seed: u64,
    pub layers: Vec<LayerParams>,
    /// Layers excluded from updates.
    pub frozen: Vec<bool>,
    /// Bumped on every in-place update; forward caches record it.
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for NetworkParams {
    fn eq(&self, other: &Self) -> bool {
        self.plan == other.plan && self.seed == other.seed && self.layers == other.layers && self.frozen == other.frozen
    }
}

impl NetworkParams {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(plan: NetworkPlan, seed: u64) -> Result<Self> {
        let shapes = plan.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(plan.layers.len());
        let mut in_shape = plan.input_shape();
        for (spec, out_shape) in plan.layers.iter().zip(&shapes) {
            let p = match (*spec, in_shape) {
                (LayerSpec::Conv { kernel, channels, .. }, Shape::Spatial { c, .. }) => {
                    let fan_in = kernel * kernel * c;
                    uniform_layer(&mut rng, channels * fan_in, fan_in, channels)
                }
                (LayerSpec::Affine { out_dim }, s) => uniform_layer(&mut rng, out_dim * s.len(), s.len(), out_dim),
                _ => LayerParams::default(),
            };
            layers.push(p);
            in_shape = *out_shape;
        }
        let frozen = vec![false; plan.layers.len()];
        Ok(NetworkParams {
            plan,
            seed,
            layers,
            frozen,
            generation: 0,
        })
    }

    /// Zero weights and biases everywhere.
    pub fn zeros(plan: NetworkPlan) -> Result<Self> {
        let mut p = Self::init(plan, 0)?;
        for l in &mut p.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(p)
    }

    /// Checks layer shapes against the plan (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        let reference = Self::zeros(self.plan.clone())?;
        if self.layers.len() != reference.layers.len() || self.frozen.len() != reference.layers.len() {
            return Err(Error::Config("parameter layer count does not match plan".into()));
        }
        for (l, (a, b)) in self.layers.iter().zip(&reference.layers).enumerate() {
            if a.weights.len() != b.weights.len() || a.bias.len() != b.bias.len() {
                return Err(Error::Shape {
                    layer: l,
                    expected: format!("{} weights + {} bias", b.weights.len(), b.bias.len()),
                    actual: format!("{} weights + {} bias", a.weights.len(), a.bias.len()),
                });
            }
        }
        if !self.is_finite() {
            return Err(Error::Config("non-finite network parameter".into()));
        }
        Ok(())
    }

    /// Freezes or unfreezes the backbone layers.
    pub fn set_backbone_frozen(&mut self, frozen: bool) {
        for (l, f) in self.frozen.iter_mut().enumerate() {
            *f = frozen && l < self.plan.backbone_layers;
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    /// `params -= lr * grads` on unfrozen layers.
    pub fn sgd_step(&mut self, grads: &ParamGrads, lr: f64) {
        for ((p, g), &frozen) in self.layers.iter_mut().zip(&grads.layers).zip(&self.frozen) {
            if frozen {
                continue;
            }
            for (w, d) in p.weights.iter_mut().zip(&g.weights) {
                *w -= lr * d;
            }
            for (b, d) in p.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
        self.generation += 1;
    }

    /// Mutable access to one layer; invalidates outstanding caches.
    pub fn layer_mut(&mut self, layer: usize) -> &mut LayerParams {
        self.generation += 1;
        &mut self.layers[layer]
    }
}

fn uniform_layer(rng: &mut ChaCha8Rng, n_weights: usize, fan_in: usize, n_bias: usize) -> LayerParams {
    let bound = (6.0 / fan_in as f64).sqrt();
    LayerParams {
        weights: (0..n_weights).map(|_| rng.random_range(-bound..bound)).collect(),
        bias: vec![0.0; n_bias],
    }
}

/// Gradients with the same layout as [`NetworkParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

impl ParamGrads {
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

/// A raw image tensor, `HWC` order, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Image(ImageTensor),
    Feature(Vec<f64>),
}

impl Input {
    pub fn shape(&self) -> Shape {
        match self {
            Input::Image(t) => Shape::Spatial {
                h: t.height,
                w: t.width,
                c: t.channels,
            },
            Input::Feature(v) => Shape::Flat(v.len()),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Input::Image(t) => &t.data,
            Input::Feature(v) => v,
        }
    }
}

/// Everything backward needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    in_shapes: Vec<Shape>,
    /// Per-channel flat argmax index for each spatial max pool layer.
    argmax: Vec<Vec<usize>>,
}

impl ForwardCache {
    /// Distance of this forward pass from the nearest point where the
    /// network is not differentiable: the smallest `|x|` entering a relu,
    /// or the smallest gap between the top two values of a pooled channel.
    pub fn kink_margin(&self, plan: &NetworkPlan) -> f64 {
        let mut margin = f64::INFINITY;
        for (l, spec) in plan.layers.iter().enumerate().take(self.inputs.len()) {
            let x = &self.inputs[l];
            match (spec, self.in_shapes[l]) {
                (LayerSpec::Relu, _) => {
                    margin = x.iter().fold(margin, |m, v| m.min(v.abs()));
                }
                (LayerSpec::SpatialMaxPool, Shape::Spatial { h, w, c }) if h * w > 1 => {
                    for ch in 0..c {
                        let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                        for pos in 0..h * w {
                            let v = x[pos * c + ch];
                            if v > top {
                                second = top;
                                top = v;
                            } else if v > second {
                                second = v;
                            }
                        }
                        margin = margin.min(top - second);
                    }
                }
                _ => {}
            }
        }
        margin
    }
}

pub fn forward(input: &Input, params: &NetworkParams) -> Result<(f64, ForwardCache)> {
    let plan = &params.plan;
    let expected = plan.input_shape();
    let got = input.shape();
    if got != expected || input.values().len() != expected.len() {
        return Err(Error::Shape {
            layer: 0,
            expected: expected.to_string(),
            actual: got.to_string(),
        });
    }
    let mut x = input.values().to_vec();
    let mut shape = expected;
    let mut cache = ForwardCache {
        generation: params.generation,
        inputs: Vec::with_capacity(plan.layers.len()),
        in_shapes: Vec::with_capacity(plan.layers.len()),
        argmax: Vec::with_capacity(plan.layers.len()),
    };
    for (l, spec) in plan.layers.iter().enumerate() {
        let p = &params.layers[l];
        let (y, out_shape, argmax) = match (*spec, shape) {
            (LayerSpec::Conv { kernel, channels, stride }, Shape::Spatial { h, w, c }) => {
                let (y, oh, ow) = conv_forward(&x, h, w, c, p, kernel, channels, stride);
                (y, Shape::Spatial { h: oh, w: ow, c: channels }, Vec::new())
            }
            (LayerSpec::Relu, s) => (x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(), s, Vec::new()),
            (LayerSpec::SpatialMaxPool, Shape::Spatial { h, w, c }) => {
                let mut best = vec![0usize; c];
                let mut y = vec![f64::NEG_INFINITY; c];
                for pos in 0..h * w {
                    for ch in 0..c {
                        let v = x[pos * c + ch];
                        if v > y[ch] {
                            y[ch] = v;
                            best[ch] = pos * c + ch;
                        }
                    }
                }
                // All -inf or NaN channels fall back to the first position.
                for ch in 0..c {
                    if !(y[ch] > f64::NEG_INFINITY) {
                        y[ch] = x[ch];
                        best[ch] = ch;
                    }
                }
                (y, Shape::Flat(c), best)
            }
            (LayerSpec::Affine { out_dim }, s) => {
                let n_in = s.len();
                let y = (0..out_dim)
                    .map(|o| {
                        let row = &p.weights[o * n_in..(o + 1) * n_in];
                        row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + p.bias[o]
                    })
                    .collect();
                (y, Shape::Flat(out_dim), Vec::new())
            }
            (spec, s) => {
                return Err(Error::Shape {
                    layer: l,
                    expected: format!("input compatible with {spec:?}"),
                    actual: s.to_string(),
                })
            }
        };
        cache.inputs.push(std::mem::replace(&mut x, y));
        cache.in_shapes.push(shape);
        cache.argmax.push(argmax);
        shape = out_shape;
    }
    Ok((x[0], cache))
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    h: usize,
    w: usize,
    c: usize,
    p: &LayerParams,
    kernel: usize,
    out_c: usize,
    stride: usize,
) -> (Vec<f64>, usize, usize) {
    let pad = kernel / 2;
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (w + 2 * pad - kernel) / stride + 1;
    let mut y = vec![0.0; oh * ow * out_c];
    for oy in 0..oh {
        for ox in 0..ow {
            let out = &mut y[(oy * ow + ox) * out_c..(oy * ow + ox + 1) * out_c];
            out.copy_from_slice(&p.bias);
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xin = &x[(iy as usize * w + ix as usize) * c..][..c];
                    for (oc, o) in out.iter_mut().enumerate() {
                        let wk = &p.weights[((oc * kernel + ky) * kernel + kx) * c..][..c];
                        *o += wk.iter().zip(xin).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
    }
    (y, oh, ow)
}

/// Accumulates `d_score * d(score)/d(params)` into `grads`. Frozen layers
/// are skipped and stay zero.
pub fn backward_into(cache: &ForwardCache, d_score: f64, params: &NetworkParams, grads: &mut ParamGrads) -> Result<()> {
    if cache.generation != params.generation {
        return Err(Error::StaleCache(format!(
            "cache from parameter generation {}, parameters at {}",
            cache.generation, params.generation
        )));
    }
    let plan = &params.plan;
    if cache.inputs.len() != plan.layers.len() || grads.layers.len() != plan.layers.len() {
        return Err(Error::StaleCache("layer count mismatch".into()));
    }
    // Nothing upstream of the first trainable layer needs a gradient.
    let first_trainable = (0..plan.layers.len()).find(|&l| !params.frozen[l] && plan.layers[l].has_params());
    let Some(first_trainable) = first_trainable else {
        return Ok(());
    };
    let mut dy = vec![d_score];
    for l in (first_trainable..plan.layers.len()).rev() {
        let x = &cache.inputs[l];
        let p = &params.layers[l];
        let trainable = !params.frozen[l];
        let need_dx = l > first_trainable;
        let g = &mut grads.layers[l];
        dy = match (plan.layers[l], cache.in_shapes[l]) {
            (LayerSpec::Affine { out_dim }, s) => {
                let n_in = s.len();
                if trainable {
                    for o in 0..out_dim {
                        g.bias[o] += dy[o];
                        let gw = &mut g.weights[o * n_in..(o + 1) * n_in];
                        for (gwi, xi) in gw.iter_mut().zip(x) {
                            *gwi += dy[o] * xi;
                        }
                    }
                }
                if need_dx {
                    let mut dx = vec![0.0; n_in];
                    for o in 0..out_dim {
                        let row = &p.weights[o * n_in..(o + 1) * n_in];
                        for (d, wi) in dx.iter_mut().zip(row) {
                            *d += dy[o] * wi;
                        }
                    }
                    dx
                } else {
                    Vec::new()
                }
            }
            (LayerSpec::Relu, _) => x
                .iter()
                .zip(&dy)
                .map(|(&xi, &d)| if xi > 0.0 { d } else { 0.0 })
                .collect(),
            (LayerSpec::SpatialMaxPool, s) => {
                let mut dx = vec![0.0; s.len()];
                for (ch, &idx) in cache.argmax[l].iter().enumerate() {
                    dx[idx] += dy[ch];
                }
                dx
            }
            (LayerSpec::Conv { kernel, channels, stride }, Shape::Spatial { h, w, c }) => {
                conv_backward(x, h, w, c, p, g, kernel, channels, stride, &dy, trainable, need_dx)
            }
            (spec, s) => {
                return Err(Error::Shape {
                    layer: l,
                    expected: format!("input compatible with {spec:?}"),
                    actual: s.to_string(),
                })
            }
        };
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    h: usize,
    w: usize,
    c: usize,
    p: &LayerParams,
    g: &mut LayerParams,
    kernel: usize,
    out_c: usize,
    stride: usize,
    dy: &[f64],
    trainable: bool,
    need_dx: bool,
) -> Vec<f64> {
    let pad = kernel / 2;
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (w + 2 * pad - kernel) / stride + 1;
    let mut dx = if need_dx { vec![0.0; h * w * c] } else { Vec::new() };
    for oy in 0..oh {
        for ox in 0..ow {
            let d_out = &dy[(oy * ow + ox) * out_c..][..out_c];
            if trainable {
                for (gb, d) in g.bias.iter_mut().zip(d_out) {
                    *gb += d;
                }
            }
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let base = (iy as usize * w + ix as usize) * c;
                    for (oc, &d) in d_out.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let woff = ((oc * kernel + ky) * kernel + kx) * c;
                        if trainable {
                            let gw = &mut g.weights[woff..woff + c];
                            for (gwi, xi) in gw.iter_mut().zip(&x[base..base + c]) {
                                *gwi += d * xi;
                            }
                        }
                        if need_dx {
                            let wk = &p.weights[woff..woff + c];
                            for (dxi, wi) in dx[base..base + c].iter_mut().zip(wk) {
                                *dxi += d * wi;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of `d_score * score` with respect to every parameter.
pub fn backward(cache: &ForwardCache, d_score: f64, params: &NetworkParams) -> Result<ParamGrads> {
    let mut grads = params.zero_grads();
    backward_into(cache, d_score, params, &mut grads)?;
    Ok(grads)
}

/// Scores both members of a pair with one shared parameter set.
pub fn siamese_forward(
    first: &Input,
    second: &Input,
    params: &NetworkParams,
) -> Result<(ScorePair, ForwardCache, ForwardCache)> {
    let (s1, c1) = forward(first, params)?;
    let (s2, c2) = forward(second, params)?;
    Ok((ScorePair { s1, s2 }, c1, c2))
}

/// Score without keeping the cache.
pub fn score(input: &Input, params: &NetworkParams) -> Result<f64> {
    forward(input, params).map(|(s, _)| s)
}
