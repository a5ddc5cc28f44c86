//! Hybrid distribution-matching loss.
//!
//! A scalar score `s` becomes a distribution over the three global buckets
//! through a Gaussian-kernel softmax around learnable anchors:
//! `p_i ∝ exp(-(s - a_i)^2)`. The score gap `s1 - s2` of a pair becomes a
//! distribution over the five relative buckets the same way, with anchors
//! `(-d2, -d1, 0, d1, d2)` where `d1 = exp(a)` and `d2 = exp(a) + exp(b)`.
//! Both are matched to crowd distributions with cross entropy and mixed per
//! pair by `lambda = min(1, ||g1 - g2||^2)`:
//!
//! ```text
//! L = lambda * (Lg1 + Lg2) + (1 - lambda) * Lr
//! ```
//!
//! `lambda` depends only on crowd data, so no gradient flows through it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, softmax, squared_distance};
use crate::rating::{RatingDistribution, GLOBAL_BUCKETS, GLOBAL_VALUES, PAIRWISE_BUCKETS};

/// Learnable anchors that turn scores into rating probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardScores {
    pub global_anchors: [f64; GLOBAL_BUCKETS],
    /// `(a, b)`: the relative anchors are `exp(a)` and `exp(a) + exp(b)`.
    pub relative_log_gaps: [f64; 2],
}

impl Default for StandardScores {
    /// Anchors on the rating scales: global `(1, 2, 3)`, relative `(-2..=2)`.
    fn default() -> Self {
        StandardScores {
            global_anchors: GLOBAL_VALUES,
            relative_log_gaps: [0.0, 0.0],
        }
    }
}

impl StandardScores {
    /// `(-d2, -d1, 0, d1, d2)`.
    pub fn relative_anchor_vector(&self) -> [f64; PAIRWISE_BUCKETS] {
        let [a, b] = self.relative_log_gaps;
        let d1 = a.exp();
        let d2 = d1 + b.exp();
        [-d2, -d1, 0.0, d1, d2]
    }

    pub fn is_finite(&self) -> bool {
        self.global_anchors.iter().chain(&self.relative_log_gaps).all(|x| x.is_finite())
    }
}

pub fn relative_anchor_vector(standard: &StandardScores) -> [f64; PAIRWISE_BUCKETS] {
    standard.relative_anchor_vector()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub s1: f64,
    pub s2: f64,
}

impl ScorePair {
    pub fn delta(&self) -> f64 {
        self.s1 - self.s2
    }

    pub fn swapped(&self) -> Self {
        ScorePair { s1: self.s2, s2: self.s1 }
    }
}

/// Which crowd signal drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Per-pair adaptive mix of both signals.
    #[default]
    Hybrid,
    /// Global ratings only (`lambda = 1`).
    GlobalOnly,
    /// Relative ratings only (`lambda = 0`).
    PairwiseOnly,
}

fn gaussian_logits(x: f64, anchors: &[f64]) -> Vec<f64> {
    anchors.iter().map(|a| -(x - a) * (x - a)).collect()
}

/// Global rating probabilities of a single score.
pub fn global_probs(s: f64, anchors: &[f64]) -> Vec<f64> {
    softmax(&gaussian_logits(s, anchors))
}

/// Relative rating probabilities of a score gap, ordered -R..=R.
pub fn pairwise_probs(delta_s: f64, anchors: &[f64]) -> Vec<f64> {
    softmax(&gaussian_logits(delta_s, anchors))
}

/// `-sum_i target_i * ln(pred_i)`.
pub fn cross_entropy(pred: &[f64], target: &RatingDistribution) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    Ok(-pred
        .iter()
        .zip(target.probs())
        .filter(|(_, &t)| t > 0.0)
        .map(|(p, t)| t * p.ln())
        .sum::<f64>())
}

/// Cross entropy of the Gaussian-kernel distribution at `x`, evaluated in
/// log-sum-exp form, and its derivatives with respect to `x` and each anchor.
struct KernelTerm {
    loss: f64,
    d_x: f64,
    d_anchors: Vec<f64>,
}

fn kernel_cross_entropy(x: f64, anchors: &[f64], target: &[f64]) -> KernelTerm {
    let logits = gaussian_logits(x, anchors);
    let lse = log_sum_exp(&logits);
    let loss = lse - target.iter().zip(&logits).map(|(t, z)| t * z).sum::<f64>();
    let probs = softmax(&logits);
    // dL/dz_i = p_i - t_i; dz_i/dx = -2(x - a_i); dz_i/da_i = 2(x - a_i)
    let mut d_x = 0.0;
    let mut d_anchors = Vec::with_capacity(anchors.len());
    for ((p, t), a) in probs.iter().zip(target).zip(anchors) {
        let g = p - t;
        d_x += -2.0 * g * (x - a);
        d_anchors.push(2.0 * g * (x - a));
    }
    KernelTerm { loss, d_x, d_anchors }
}

/// Squared L2 distance between the two global distributions, raw and
/// clamped to `[0, 1]`.
pub fn adaptive_weight(gdist1: &RatingDistribution, gdist2: &RatingDistribution) -> Result<(f64, f64)> {
    if gdist1.len() != gdist2.len() {
        return Err(Error::LengthMismatch {
            expected: gdist1.len(),
            actual: gdist2.len(),
        });
    }
    let raw = squared_distance(gdist1.probs(), gdist2.probs());
    Ok((raw, raw.min(1.0)))
}

/// Crowd distributions attached to one training pair.
#[derive(Debug, Clone, Copy)]
pub struct PairTargets<'a> {
    pub global1: &'a RatingDistribution,
    pub global2: &'a RatingDistribution,
    pub relative: &'a RatingDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossGrads {
    pub d_s1: f64,
    pub d_s2: f64,
    pub d_global_anchors: [f64; GLOBAL_BUCKETS],
    pub d_relative_log_gaps: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub total: f64,
    pub global1: f64,
    pub global2: f64,
    pub relative: f64,
    pub lambda_raw: f64,
    /// The weight actually applied to the global terms.
    pub lambda: f64,
    pub grads: LossGrads,
}

fn check_targets(targets: &PairTargets<'_>) -> Result<()> {
    for (d, n) in [
        (targets.global1, GLOBAL_BUCKETS),
        (targets.global2, GLOBAL_BUCKETS),
        (targets.relative, PAIRWISE_BUCKETS),
    ] {
        if d.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: d.len(),
            });
        }
    }
    Ok(())
}

/// Loss, components, and gradients for one pair.
pub fn hybrid_loss(
    pair: ScorePair,
    targets: &PairTargets<'_>,
    standard: &StandardScores,
    supervision: Supervision,
) -> Result<LossBundle> {
    check_targets(targets)?;
    let (lambda_raw, lambda_eff) = adaptive_weight(targets.global1, targets.global2)?;
    let lambda = match supervision {
        Supervision::Hybrid => lambda_eff,
        Supervision::GlobalOnly => 1.0,
        Supervision::PairwiseOnly => 0.0,
    };

    let g1 = kernel_cross_entropy(pair.s1, &standard.global_anchors, targets.global1.probs());
    let g2 = kernel_cross_entropy(pair.s2, &standard.global_anchors, targets.global2.probs());
    let rel_anchors = standard.relative_anchor_vector();
    let r = kernel_cross_entropy(pair.delta(), &rel_anchors, targets.relative.probs());

    let total = lambda * (g1.loss + g2.loss) + (1.0 - lambda) * r.loss;

    let mut grads = LossGrads {
        d_s1: lambda * g1.d_x + (1.0 - lambda) * r.d_x,
        d_s2: lambda * g2.d_x - (1.0 - lambda) * r.d_x,
        ..Default::default()
    };
    for k in 0..GLOBAL_BUCKETS {
        grads.d_global_anchors[k] = lambda * (g1.d_anchors[k] + g2.d_anchors[k]);
    }
    // anchors (-e^a - e^b, -e^a, 0, e^a, e^a + e^b)
    let [a, b] = standard.relative_log_gaps;
    let (ea, eb) = (a.exp(), b.exp());
    let dr = &r.d_anchors;
    grads.d_relative_log_gaps = [
        (1.0 - lambda) * ea * (-dr[0] - dr[1] + dr[3] + dr[4]),
        (1.0 - lambda) * eb * (-dr[0] + dr[4]),
    ];

    Ok(LossBundle {
        total,
        global1: g1.loss,
        global2: g2.loss,
        relative: r.loss,
        lambda_raw,
        lambda,
        grads,
    })
}

/// Gradients of [`hybrid_loss`] alone.
pub fn hybrid_loss_backward(
    pair: ScorePair,
    targets: &PairTargets<'_>,
    standard: &StandardScores,
    supervision: Supervision,
) -> Result<LossGrads> {
    hybrid_loss(pair, targets, standard, supervision).map(|b| b.grads)
}
