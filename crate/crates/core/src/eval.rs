//! Evaluation: average cross entropies, global ROC, pairwise accuracy and
//! per-clip sequence scoring.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PairRecord};
use crate::error::{Error, Result};
use crate::loss::{cross_entropy, global_probs, pairwise_probs, ScorePair, StandardScores};
use crate::model::Model;
use crate::net::Input;
use crate::rating::{votes_to_distribution, GlobalVotes, PairwiseVotes, RatingDistribution, Votes, PAIRWISE_VALUES};

/// Mean cross entropy of predicted distributions against crowd targets.
pub fn mean_cross_entropy(preds: &[Vec<f64>], targets: &[RatingDistribution]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            actual: preds.len(),
        });
    }
    let mut sum = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        sum += cross_entropy(p, t)?;
    }
    Ok(sum / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropies {
    pub mean_lg: f64,
    pub mean_lr: f64,
}

/// Mean global cross entropy over every item of `dataset` and mean relative
/// cross entropy over its pairs. Pass a single-split subset to evaluate one
/// split.
pub fn average_cross_entropies(model: &Model, dataset: &Dataset) -> Result<CrossEntropies> {
    if dataset.items.is_empty() {
        return Err(Error::Empty("item set"));
    }
    if dataset.pairs.is_empty() {
        return Err(Error::Empty("pair set"));
    }
    let scores = model.score_all(dataset.items.iter().map(|it| &it.input))?;
    let anchors = model.standard.global_anchors;
    let g_preds: Vec<Vec<f64>> = scores.iter().map(|&s| global_probs(s, &anchors)).collect();
    let g_targets = dataset
        .items
        .iter()
        .map(|it| votes_to_distribution(&it.global_votes))
        .collect::<Result<Vec<_>>>()?;

    let rel = model.standard.relative_anchor_vector();
    let mut r_preds = Vec::with_capacity(dataset.pairs.len());
    let mut r_targets = Vec::with_capacity(dataset.pairs.len());
    for p in &dataset.pairs {
        let (a, b) = pair_positions(dataset, p)?;
        r_preds.push(pairwise_probs(scores[a] - scores[b], &rel));
        r_targets.push(votes_to_distribution(&p.votes)?);
    }
    Ok(CrossEntropies {
        mean_lg: mean_cross_entropy(&g_preds, &g_targets)?,
        mean_lr: mean_cross_entropy(&r_preds, &r_targets)?,
    })
}

fn pair_positions(dataset: &Dataset, p: &PairRecord) -> Result<(usize, usize)> {
    let find = |id: &str| {
        dataset
            .position(id)
            .ok_or_else(|| Error::Dataset(format!("pair ({}, {}): unknown item `{id}`", p.first, p.second)))
    };
    Ok((find(&p.first)?, find(&p.second)?))
}

/// An item is positive when strictly more than `p_a` of its votes are 3 stars.
pub fn global_binary_label(votes: &GlobalVotes, p_a: f64) -> Result<bool> {
    let dist = votes_to_distribution(votes)?;
    Ok(dist.probs()[2] > p_a)
}

pub fn global_binary_labels<'a>(votes: impl IntoIterator<Item = &'a GlobalVotes>, p_a: f64) -> Result<Vec<bool>> {
    votes.into_iter().map(|v| global_binary_label(v, p_a)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Items scoring at or above the threshold are predicted positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        out
    }
}

/// ROC over every distinct score threshold; tied scores enter together.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("ROC scores must be finite".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
        .sum();
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseVerdict {
    FirstBetter,
    Equal,
    SecondBetter,
}

impl PairwiseVerdict {
    pub fn reversed(self) -> Self {
        match self {
            PairwiseVerdict::FirstBetter => PairwiseVerdict::SecondBetter,
            PairwiseVerdict::Equal => PairwiseVerdict::Equal,
            PairwiseVerdict::SecondBetter => PairwiseVerdict::FirstBetter,
        }
    }
}

fn margin_verdict(p_more: f64, p_less: f64, p_b: f64) -> PairwiseVerdict {
    if p_more - p_less > p_b {
        PairwiseVerdict::FirstBetter
    } else if p_less - p_more > p_b {
        PairwiseVerdict::SecondBetter
    } else {
        PairwiseVerdict::Equal
    }
}

/// `p_more` / `p_less` of a 5-bucket distribution ordered -2..=2.
fn more_less(probs: &[f64]) -> (f64, f64) {
    (probs[3] + probs[4], probs[0] + probs[1])
}

/// Crowd verdict: first better when the share voting +1/+2 exceeds the share
/// voting -1/-2 by more than `p_b`, and symmetrically for second better.
pub fn pairwise_ground_truth(votes: &PairwiseVotes, p_b: f64) -> Result<PairwiseVerdict> {
    let total = votes.total();
    if total == 0 {
        return Err(Error::EmptyVotes);
    }
    // one division of the count difference, so e.g. 3 of 5 is exactly 0.6
    let c = votes.0.map(u64::from);
    let margin = (c[3] + c[4]) as f64 - (c[0] + c[1]) as f64;
    Ok(margin_verdict(margin / total as f64, 0.0, p_b))
}

/// How a predicted relative distribution becomes a 3-way verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum DistributionRule {
    /// The crowd rule applied to the predicted distribution at the same `p_b`.
    Margin,
    /// Sign of the expected relative label, equal when `|E| <= tau`.
    ExpectedLabel { tau: f64 },
    /// Most probable bucket grouped into {+1,+2} / {0} / {-1,-2}.
    ArgmaxGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PredictMode {
    Distribution(DistributionRule),
    /// Equal when `|s1 - s2| <= tau`. `None` selects tau on validation pairs.
    ScoreThreshold { tau: Option<f64> },
}

impl Default for PredictMode {
    fn default() -> Self {
        PredictMode::Distribution(DistributionRule::Margin)
    }
}

/// Model verdict for a scored pair.
pub fn pairwise_predict(scores: ScorePair, standard: &StandardScores, mode: PredictMode, p_b: f64) -> PairwiseVerdict {
    let delta = scores.delta();
    match mode {
        PredictMode::ScoreThreshold { tau } => {
            let tau = tau.unwrap_or(0.0);
            if delta.abs() <= tau {
                PairwiseVerdict::Equal
            } else if delta > 0.0 {
                PairwiseVerdict::FirstBetter
            } else {
                PairwiseVerdict::SecondBetter
            }
        }
        PredictMode::Distribution(rule) => {
            let probs = pairwise_probs(delta, &standard.relative_anchor_vector());
            match rule {
                DistributionRule::Margin => {
                    let (more, less) = more_less(&probs);
                    margin_verdict(more, less, p_b)
                }
                DistributionRule::ExpectedLabel { tau } => {
                    // pair the buckets so E is exactly 0 when probs are symmetric
                    let e: f64 = (1..=2).map(|i| PAIRWISE_VALUES[2 + i] * (probs[2 + i] - probs[2 - i])).sum();
                    if e.abs() <= tau {
                        PairwiseVerdict::Equal
                    } else if e > 0.0 {
                        PairwiseVerdict::FirstBetter
                    } else {
                        PairwiseVerdict::SecondBetter
                    }
                }
                DistributionRule::ArgmaxGroup => {
                    let mut best = 2;
                    for (i, &p) in probs.iter().enumerate() {
                        if p > probs[best] {
                            best = i;
                        }
                    }
                    match best {
                        3 | 4 => PairwiseVerdict::FirstBetter,
                        0 | 1 => PairwiseVerdict::SecondBetter,
                        _ => PairwiseVerdict::Equal,
                    }
                }
            }
        }
    }
}

/// A pair's score gap together with its crowd votes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub scores: ScorePair,
    pub votes: PairwiseVotes,
}

/// Scores both members of every pair.
pub fn score_pairs(model: &Model, dataset: &Dataset) -> Result<Vec<ScoredPair>> {
    let scores = model.score_all(dataset.items.iter().map(|it| &it.input))?;
    dataset
        .pairs
        .iter()
        .map(|p| {
            let (a, b) = pair_positions(dataset, p)?;
            Ok(ScoredPair {
                scores: ScorePair {
                    s1: scores[a],
                    s2: scores[b],
                },
                votes: p.votes,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub p_b: f64,
    pub accuracy: f64,
    /// Number of pairs counted.
    pub n: usize,
    /// Equal band used in score-threshold mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

fn accuracy_at(pairs: &[ScoredPair], standard: &StandardScores, mode: PredictMode, p_b: f64, decided_only: bool) -> Result<(f64, usize)> {
    let mut hits = 0usize;
    let mut n = 0usize;
    for p in pairs {
        let truth = pairwise_ground_truth(&p.votes, p_b)?;
        if decided_only && truth == PairwiseVerdict::Equal {
            continue;
        }
        n += 1;
        if pairwise_predict(p.scores, standard, mode, p_b) == truth {
            hits += 1;
        }
    }
    Ok((if n == 0 { 0.0 } else { hits as f64 / n as f64 }, n))
}

/// Nearest-rank percentile of the values.
fn percentile(mut values: Vec<f64>, q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

pub const TAU_GRID_POINTS: usize = 50;

/// Picks the equal band maximizing 3-way accuracy on `validation`, over 50
/// evenly spaced values from 0 to the 95th percentile of `|s1 - s2|`.
/// Ties go to the smallest tau.
pub fn select_tau(validation: &[ScoredPair], p_b: f64) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::Empty("validation pair set"));
    }
    let top = percentile(validation.iter().map(|p| p.scores.delta().abs()).collect(), 0.95);
    let standard = StandardScores::default();
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..TAU_GRID_POINTS {
        let tau = top * k as f64 / (TAU_GRID_POINTS - 1) as f64;
        let (acc, _) = accuracy_at(validation, &standard, PredictMode::ScoreThreshold { tau: Some(tau) }, p_b, false)?;
        if acc > best.1 {
            best = (tau, acc);
        }
    }
    Ok(best.0)
}

/// Accuracy of 3-way pairwise verdicts for each `p_b`. In score-threshold
/// mode without a fixed tau, tau is selected per `p_b` on `validation`
/// (falling back to `pairs` itself when no validation set is given).
pub fn pairwise_accuracy(
    pairs: &[ScoredPair],
    standard: &StandardScores,
    p_bs: &[f64],
    mode: PredictMode,
    validation: Option<&[ScoredPair]>,
    decided_only: bool,
) -> Result<Vec<AccuracyPoint>> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair set"));
    }
    p_bs.iter()
        .map(|&p_b| {
            let (mode, tau) = match mode {
                PredictMode::ScoreThreshold { tau: None } => {
                    let tau = select_tau(validation.unwrap_or(pairs), p_b)?;
                    (PredictMode::ScoreThreshold { tau: Some(tau) }, Some(tau))
                }
                PredictMode::ScoreThreshold { tau } => (mode, tau),
                m => (m, None),
            };
            let (accuracy, n) = accuracy_at(pairs, standard, mode, p_b, decided_only)?;
            Ok(AccuracyPoint { p_b, accuracy, n, tau })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScores {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub peak_index: usize,
}

/// Min-max normalization within one clip; a constant clip maps to all 0.5.
pub fn normalize_sequence(raw: Vec<f64>) -> Result<SequenceScores> {
    if raw.is_empty() {
        return Err(Error::Empty("frame sequence"));
    }
    let mut peak_index = 0;
    for (i, &s) in raw.iter().enumerate() {
        if s > raw[peak_index] {
            peak_index = i;
        }
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw[peak_index];
    let normalized = if max > min {
        raw.iter()
            .map(|&s| if s == max { 1.0 } else { (s - min) / (max - min) })
            .collect()
    } else {
        vec![0.5; raw.len()]
    };
    Ok(SequenceScores {
        raw,
        normalized,
        peak_index,
    })
}

pub fn score_sequence(frames: &[Input], model: &Model) -> Result<SequenceScores> {
    if frames.is_empty() {
        return Err(Error::Empty("frame sequence"));
    }
    normalize_sequence(model.score_all(frames)?)
}

/// A clip with its annotated peak frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub frames: Vec<Input>,
    pub peaks: Vec<usize>,
}

/// Mean normalized score at the annotated peak frames over all clips.
pub fn peak_score_report(clips: &[Clip], model: &Model) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for clip in clips {
        if clip.peaks.is_empty() {
            return Err(Error::Config("clip without annotated peak".into()));
        }
        let seq = score_sequence(&clip.frames, model)?;
        for &p in &clip.peaks {
            let v = *seq.normalized.get(p).ok_or(Error::OutOfRange {
                index: p,
                len: seq.normalized.len(),
            })?;
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("clip set"));
    }
    Ok(sum / n as f64)
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[k]] {
            end += 1;
        }
        let r = (k + end) as f64 / 2.0 + 1.0;
        for &i in &order[k..=end] {
            ranks[i] = r;
        }
        k = end + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewItems { needed: 2, actual: a.len() });
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub p_a: f64,
    pub p_bs: Vec<f64>,
    pub mode: PredictMode,
    pub decided_only: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            p_a: 0.2,
            p_bs: vec![0.3, 0.4, 0.5, 0.6],
            mode: PredictMode::default(),
            decided_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_items: usize,
    pub n_pairs: usize,
    pub p_a: f64,
    pub auc: f64,
    #[serde(rename = "mean_Lg")]
    pub mean_lg: f64,
    #[serde(rename = "mean_Lr")]
    pub mean_lr: f64,
    pub mode: PredictMode,
    pub decided_only: bool,
    pub pairwise: Vec<AccuracyPoint>,
}

/// Full report for one split. `validation` supplies pairs for tau selection
/// in score-threshold mode.
pub fn evaluate(model: &Model, dataset: &Dataset, validation: Option<&Dataset>, opts: &EvalOptions) -> Result<(EvaluationReport, RocCurve)> {
    let ce = average_cross_entropies(model, dataset)?;
    let scores = model.score_all(dataset.items.iter().map(|it| &it.input))?;
    let labels = global_binary_labels(dataset.items.iter().map(|it| &it.global_votes), opts.p_a)?;
    let curve = roc(&scores, &labels)?;
    let scored = score_pairs(model, dataset)?;
    let val = match validation {
        Some(v) if !v.pairs.is_empty() => Some(score_pairs(model, v)?),
        _ => None,
    };
    let pairwise = pairwise_accuracy(&scored, &model.standard, &opts.p_bs, opts.mode, val.as_deref(), opts.decided_only)?;
    Ok((
        EvaluationReport {
            n_items: dataset.items.len(),
            n_pairs: dataset.pairs.len(),
            p_a: opts.p_a,
            auc: curve.auc,
            mean_lg: ce.mean_lg,
            mean_lr: ce.mean_lr,
            mode: opts.mode,
            decided_only: opts.decided_only,
            pairwise,
        },
        curve,
    ))
}
