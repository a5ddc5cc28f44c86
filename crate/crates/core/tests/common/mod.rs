#![allow(dead_code)]

use crowdrank::loss::{hybrid_loss, hybrid_loss_backward, PairTargets, ScorePair, StandardScores, Supervision};
use crowdrank::net::{self, ImageTensor, Input, InputKind, LayerSpec, NetworkParams, NetworkPlan};
use crowdrank::rating::RatingDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than `REL_FLOOR * max(1, |loss|)` are compared in
/// absolute terms. Below that the central difference is dominated by
/// rounding in the loss value itself, which grows with the loss.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = REL_FLOOR * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

/// Random probability vector; some entries are exactly zero.
pub fn random_probs<const N: usize>(rng: &mut ChaCha8Rng) -> [f64; N] {
    loop {
        let mut w = [0.0; N];
        for x in &mut w {
            *x = if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() };
        }
        let s: f64 = w.iter().sum();
        if s > 1e-3 {
            return w.map(|x| x / s);
        }
    }
}

pub struct LossInstance {
    pub pair: ScorePair,
    pub g1: RatingDistribution,
    pub g2: RatingDistribution,
    pub r: RatingDistribution,
    pub standard: StandardScores,
}

impl LossInstance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut anchors = [0.0; 3];
        for a in &mut anchors {
            *a = rng.random_range(-1.0..4.0);
        }
        anchors.sort_by(f64::total_cmp);
        LossInstance {
            pair: ScorePair {
                s1: rng.random_range(-3.0..5.0),
                s2: rng.random_range(-3.0..5.0),
            },
            g1: RatingDistribution::global(random_probs(rng)).unwrap(),
            g2: RatingDistribution::global(random_probs(rng)).unwrap(),
            r: RatingDistribution::pairwise(random_probs(rng)).unwrap(),
            standard: StandardScores {
                global_anchors: anchors,
                relative_log_gaps: [rng.random_range(-1.5..1.0), rng.random_range(-1.5..1.0)],
            },
        }
    }

    pub fn targets(&self) -> PairTargets<'_> {
        PairTargets {
            global1: &self.g1,
            global2: &self.g2,
            relative: &self.r,
        }
    }

    pub fn total(&self, pair: ScorePair, standard: &StandardScores, sup: Supervision) -> f64 {
        hybrid_loss(pair, &self.targets(), standard, sup).unwrap().total
    }

    /// Worst relative error between the analytic loss gradients and central
    /// differences over all seven inputs.
    pub fn worst_grad_error(&self, sup: Supervision) -> f64 {
        let g = hybrid_loss_backward(self.pair, &self.targets(), &self.standard, sup).unwrap();
        let loss = self.total(self.pair, &self.standard, sup);
        let st = self.standard;
        let mut worst = 0.0f64;
        let n = central_diff(|v| self.total(ScorePair { s1: v, ..self.pair }, &st, sup), self.pair.s1);
        worst = worst.max(rel_err(g.d_s1, n, loss));
        let n = central_diff(|v| self.total(ScorePair { s2: v, ..self.pair }, &st, sup), self.pair.s2);
        worst = worst.max(rel_err(g.d_s2, n, loss));
        for k in 0..3 {
            let n = central_diff(
                |v| {
                    let mut s = st;
                    s.global_anchors[k] = v;
                    self.total(self.pair, &s, sup)
                },
                st.global_anchors[k],
            );
            worst = worst.max(rel_err(g.d_global_anchors[k], n, loss));
        }
        for k in 0..2 {
            let n = central_diff(
                |v| {
                    let mut s = st;
                    s.relative_log_gaps[k] = v;
                    self.total(self.pair, &s, sup)
                },
                st.relative_log_gaps[k],
            );
            worst = worst.max(rel_err(g.d_relative_log_gaps[k], n, loss));
        }
        worst
    }
}

/// A small image plan with every layer kind of the default plan.
pub fn tiny_image_plan() -> NetworkPlan {
    NetworkPlan {
        input: InputKind::Image { height: 5, width: 6, channels: 2 },
        layers: vec![
            LayerSpec::Conv { kernel: 3, channels: 3, stride: 2 },
            LayerSpec::Relu,
            LayerSpec::Conv { kernel: 3, channels: 4, stride: 1 },
            LayerSpec::Conv { kernel: 1, channels: 4, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::SpatialMaxPool,
            LayerSpec::Affine { out_dim: 1 },
        ],
        backbone_layers: 2,
    }
}

pub fn tiny_feature_plan() -> NetworkPlan {
    NetworkPlan {
        input: InputKind::FeatureVector { dim: 5 },
        layers: vec![
            LayerSpec::Affine { out_dim: 6 },
            LayerSpec::Relu,
            LayerSpec::Affine { out_dim: 4 },
            LayerSpec::Relu,
            LayerSpec::Affine { out_dim: 1 },
        ],
        backbone_layers: 2,
    }
}

pub fn random_input(plan: &NetworkPlan, rng: &mut ChaCha8Rng) -> Input {
    match plan.input {
        InputKind::Image { height, width, channels } => Input::Image(ImageTensor {
            height,
            width,
            channels,
            data: (0..height * width * channels).map(|_| rng.random::<f64>()).collect(),
        }),
        InputKind::FeatureVector { dim } => Input::Feature((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()),
    }
}

/// Random parameters with non-zero biases so relu inputs are spread out.
pub fn random_params(plan: &NetworkPlan, rng: &mut ChaCha8Rng) -> NetworkParams {
    let mut p = NetworkParams::init(plan.clone(), rng.random()).unwrap();
    for l in 0..p.layers.len() {
        let layer = p.layer_mut(l);
        for b in &mut layer.bias {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    p
}

/// Central difference of `pair loss(theta)` for every network parameter,
/// compared to the chained analytic gradient. Returns `None` when either
/// input sits too close to a relu or max-pool kink for differences to mean
/// anything.
pub fn siamese_worst_error(plan: &NetworkPlan, rng: &mut ChaCha8Rng) -> Option<f64> {
    let params = random_params(plan, rng);
    let x1 = random_input(plan, rng);
    let x2 = random_input(plan, rng);
    let inst = LossInstance::random(rng);
    let (_, c1) = net::forward(&x1, &params).unwrap();
    let (_, c2) = net::forward(&x2, &params).unwrap();
    if c1.kink_margin(plan).min(c2.kink_margin(plan)) < 1e-3 {
        return None;
    }
    let loss_at = |p: &NetworkParams| {
        let s1 = net::score(&x1, p).unwrap();
        let s2 = net::score(&x2, p).unwrap();
        inst.total(ScorePair { s1, s2 }, &inst.standard, Supervision::Hybrid)
    };
    let (pair, c1, c2) = net::siamese_forward(&x1, &x2, &params).unwrap();
    let bundle = hybrid_loss(pair, &inst.targets(), &inst.standard, Supervision::Hybrid).unwrap();
    let (g, loss) = (bundle.grads, bundle.total);
    let mut grads = params.zero_grads();
    net::backward_into(&c1, g.d_s1, &params, &mut grads).unwrap();
    net::backward_into(&c2, g.d_s2, &params, &mut grads).unwrap();

    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for l in 0..params.layers.len() {
        let nw = params.layers[l].weights.len();
        let nb = params.layers[l].bias.len();
        for k in 0..nw + nb {
            let orig = *param_mut(&mut probe, l, k);
            *param_mut(&mut probe, l, k) = orig + FD_STEP;
            let up = loss_at(&probe);
            *param_mut(&mut probe, l, k) = orig - FD_STEP;
            let down = loss_at(&probe);
            *param_mut(&mut probe, l, k) = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = if k < nw {
                grads.layers[l].weights[k]
            } else {
                grads.layers[l].bias[k - nw]
            };
            worst = worst.max(rel_err(analytic, numeric, loss));
        }
    }
    Some(worst)
}

/// Parameter `k` of layer `l`, weights first, then biases.
pub fn param_mut(p: &mut NetworkParams, l: usize, k: usize) -> &mut f64 {
    let layer = p.layer_mut(l);
    let nw = layer.weights.len();
    if k < nw {
        &mut layer.weights[k]
    } else {
        &mut layer.bias[k - nw]
    }
}
