//! Crowd votes, rating distributions and the global/pairwise agreement analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of global rating buckets (1 to 3 stars).
pub const GLOBAL_BUCKETS: usize = 3;
/// Number of relative rating buckets, labels -2..=2.
pub const PAIRWISE_BUCKETS: usize = 5;
/// Half-width of the relative scale, `(PAIRWISE_BUCKETS - 1) / 2`.
pub const PAIRWISE_RADIUS: usize = (PAIRWISE_BUCKETS - 1) / 2;

pub const GLOBAL_VALUES: [f64; GLOBAL_BUCKETS] = [1.0, 2.0, 3.0];
pub const PAIRWISE_VALUES: [f64; PAIRWISE_BUCKETS] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Raw 1/2/3-star vote counts for one item. `counts[k]` is the number of
/// raters who gave `k + 1` stars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalVotes(pub [u32; GLOBAL_BUCKETS]);

/// Raw relative vote counts for an ordered pair, ascending from -2 (first
/// much worse) to +2 (first much better).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairwiseVotes(pub [u32; PAIRWISE_BUCKETS]);

impl PairwiseVotes {
    /// Votes for the same pair presented in the opposite order.
    pub fn reversed(&self) -> Self {
        let mut c = self.0;
        c.reverse();
        PairwiseVotes(c)
    }
}

/// Anything that can be turned into a rating distribution.
pub trait Votes {
    fn counts(&self) -> &[u32];
    fn bucket_values(&self) -> &'static [f64];

    fn total(&self) -> u64 {
        self.counts().iter().map(|&c| c as u64).sum()
    }
}

impl Votes for GlobalVotes {
    fn counts(&self) -> &[u32] {
        &self.0
    }
    fn bucket_values(&self) -> &'static [f64] {
        &GLOBAL_VALUES
    }
}

impl Votes for PairwiseVotes {
    fn counts(&self) -> &[u32] {
        &self.0
    }
    fn bucket_values(&self) -> &'static [f64] {
        &PAIRWISE_VALUES
    }
}

/// A normalized probability vector over ordered rating buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingDistribution {
    probs: Vec<f64>,
    bucket_values: Vec<f64>,
}

impl RatingDistribution {
    /// Builds a distribution from explicit probabilities. They must be
    /// non-negative and sum to one within 1e-9; the stored copy is
    /// renormalized.
    pub fn new(probs: Vec<f64>, bucket_values: Vec<f64>) -> Result<Self> {
        if probs.len() != bucket_values.len() {
            return Err(Error::LengthMismatch {
                expected: bucket_values.len(),
                actual: probs.len(),
            });
        }
        if probs.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) {
            return Err(Error::Config(format!("probabilities out of range: {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("probabilities sum to {sum}, not 1")));
        }
        let probs = probs.into_iter().map(|p| (p / sum).min(1.0)).collect();
        Ok(RatingDistribution {
            probs,
            bucket_values,
        })
    }

    pub fn global(probs: [f64; GLOBAL_BUCKETS]) -> Result<Self> {
        Self::new(probs.to_vec(), GLOBAL_VALUES.to_vec())
    }

    pub fn pairwise(probs: [f64; PAIRWISE_BUCKETS]) -> Result<Self> {
        Self::new(probs.to_vec(), PAIRWISE_VALUES.to_vec())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bucket_values(&self) -> &[f64] {
        &self.bucket_values
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// The same distribution with bucket order reversed (pair swap for
    /// relative ratings).
    pub fn reversed(&self) -> Self {
        let mut probs = self.probs.clone();
        probs.reverse();
        RatingDistribution {
            probs,
            bucket_values: self.bucket_values.clone(),
        }
    }
}

pub fn votes_to_distribution<V: Votes + ?Sized>(votes: &V) -> Result<RatingDistribution> {
    let total = votes.total();
    if total == 0 {
        return Err(Error::EmptyVotes);
    }
    let total = total as f64;
    Ok(RatingDistribution {
        probs: votes.counts().iter().map(|&c| c as f64 / total).collect(),
        bucket_values: votes.bucket_values().to_vec(),
    })
}

/// Expected bucket value: the average rating.
pub fn mean_rating(dist: &RatingDistribution) -> f64 {
    dist.probs
        .iter()
        .zip(&dist.bucket_values)
        .map(|(p, v)| p * v)
        .sum()
}

/// Population standard deviation of the individual numeric votes.
pub fn rating_deviation<V: Votes + ?Sized>(votes: &V) -> Result<f64> {
    let total = votes.total();
    if total == 0 {
        return Err(Error::EmptyVotes);
    }
    let n = total as f64;
    let values = votes.bucket_values();
    let mean: f64 = votes
        .counts()
        .iter()
        .zip(values)
        .map(|(&c, v)| c as f64 * v)
        .sum::<f64>()
        / n;
    let var: f64 = votes
        .counts()
        .iter()
        .zip(values)
        .map(|(&c, v)| c as f64 * (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    Ok(var.sqrt())
}

/// (mean, deviation) of a vote vector, the raw material for rating histograms.
pub fn rating_summary<V: Votes + ?Sized>(votes: &V) -> Result<(f64, f64)> {
    let dist = votes_to_distribution(votes)?;
    Ok((mean_rating(&dist), rating_deviation(votes)?))
}

/// Relative judgement of the first item of a pair against the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementLabel {
    Better,
    Equal,
    Worse,
}

impl AgreementLabel {
    pub const ALL: [AgreementLabel; 3] = [
        AgreementLabel::Better,
        AgreementLabel::Equal,
        AgreementLabel::Worse,
    ];

    pub fn index(self) -> usize {
        match self {
            AgreementLabel::Better => 0,
            AgreementLabel::Equal => 1,
            AgreementLabel::Worse => 2,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            AgreementLabel::Better => AgreementLabel::Worse,
            AgreementLabel::Equal => AgreementLabel::Equal,
            AgreementLabel::Worse => AgreementLabel::Better,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgreementLabel::Better => "better",
            AgreementLabel::Equal => "equal",
            AgreementLabel::Worse => "worse",
        }
    }
}

/// Label from the average global ratings of the two items.
pub fn agreement_label_global(ave_g1: f64, ave_g2: f64, c_g: f64) -> AgreementLabel {
    if (ave_g1 - ave_g2).abs() <= c_g {
        AgreementLabel::Equal
    } else if ave_g1 > ave_g2 {
        AgreementLabel::Better
    } else {
        AgreementLabel::Worse
    }
}

/// Label from the average relative rating. Positive means the first item is
/// more attractive, matching the +2 = "first much better" vote encoding.
pub fn agreement_label_pairwise(ave_p: f64, c_p: f64) -> AgreementLabel {
    if ave_p.abs() <= c_p {
        AgreementLabel::Equal
    } else if ave_p > 0.0 {
        AgreementLabel::Better
    } else {
        AgreementLabel::Worse
    }
}

/// One pair's worth of input to [`agreement_confusion`].
#[derive(Debug, Clone, Copy)]
pub struct AgreementInput<'a> {
    pub first: &'a GlobalVotes,
    pub second: &'a GlobalVotes,
    pub relative: &'a PairwiseVotes,
}

/// Confusion between labels derived from global ratings (rows) and from
/// pairwise ratings (columns), both ordered Better, Equal, Worse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub c_g: f64,
    pub c_p: f64,
    pub counts: [[u64; 3]; 3],
    /// Row-normalized counts. Rows without support are all zero.
    pub rows: [[f64; 3]; 3],
    pub unsupported: [bool; 3],
    pub agreement_rate: f64,
    pub n_pairs: u64,
}

impl ConfusionMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("global\\pairwise,better,equal,worse,support,unsupported\n");
        for label in AgreementLabel::ALL {
            let r = label.index();
            let support: u64 = self.counts[r].iter().sum();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                label.name(),
                self.rows[r][0],
                self.rows[r][1],
                self.rows[r][2],
                support,
                self.unsupported[r]
            ));
        }
        out
    }
}

pub fn agreement_confusion(pairs: &[AgreementInput<'_>], c_g: f64, c_p: f64) -> Result<ConfusionMatrix> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    let mut counts = [[0u64; 3]; 3];
    for pair in pairs {
        let g1 = mean_rating(&votes_to_distribution(pair.first)?);
        let g2 = mean_rating(&votes_to_distribution(pair.second)?);
        let p = mean_rating(&votes_to_distribution(pair.relative)?);
        let row = agreement_label_global(g1, g2, c_g).index();
        let col = agreement_label_pairwise(p, c_p).index();
        counts[row][col] += 1;
    }
    let mut rows = [[0.0; 3]; 3];
    let mut unsupported = [false; 3];
    for r in 0..3 {
        let support: u64 = counts[r].iter().sum();
        if support == 0 {
            unsupported[r] = true;
            continue;
        }
        for c in 0..3 {
            rows[r][c] = counts[r][c] as f64 / support as f64;
        }
    }
    let n_pairs = pairs.len() as u64;
    let diagonal: u64 = (0..3).map(|i| counts[i][i]).sum();
    Ok(ConfusionMatrix {
        c_g,
        c_p,
        counts,
        rows,
        unsupported,
        agreement_rate: diagonal as f64 / n_pairs as f64,
        n_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn distribution_examples() {
        let d = votes_to_distribution(&GlobalVotes([0, 0, 10])).unwrap();
        assert_eq!(d.probs(), &[0.0, 0.0, 1.0]);
        let d = votes_to_distribution(&GlobalVotes([2, 3, 5])).unwrap();
        assert_eq!(d.probs(), &[0.2, 0.3, 0.5]);
        let d = votes_to_distribution(&PairwiseVotes([1; 5])).unwrap();
        assert_eq!(d.probs(), &[0.2; 5]);
        assert_eq!(d.bucket_values(), &PAIRWISE_VALUES);
    }

    #[test]
    fn empty_votes_rejected() {
        assert!(matches!(
            votes_to_distribution(&GlobalVotes([0, 0, 0])),
            Err(Error::EmptyVotes)
        ));
        assert!(rating_deviation(&PairwiseVotes([0; 5])).is_err());
    }

    #[test]
    fn mean_rating_examples() {
        assert_eq!(mean_rating(&RatingDistribution::global([0.0, 0.0, 1.0]).unwrap()), 3.0);
        assert_eq!(mean_rating(&RatingDistribution::global([0.5, 0.0, 0.5]).unwrap()), 2.0);
        assert_eq!(
            mean_rating(&RatingDistribution::pairwise([0.0, 0.0, 1.0, 0.0, 0.0]).unwrap()),
            0.0
        );
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(rating_deviation(&GlobalVotes([0, 10, 0])).unwrap(), 0.0);
        assert!(close(rating_deviation(&GlobalVotes([5, 0, 5])).unwrap(), 1.0, 1e-15));
        // votes {1,2,3}: mean 2, squared deviations 1,0,1 -> var 2/3
        assert!(close(
            rating_deviation(&GlobalVotes([1, 1, 1])).unwrap(),
            (2.0f64 / 3.0).sqrt(),
            1e-15
        ));
    }

    #[test]
    fn global_labels() {
        assert_eq!(agreement_label_global(2.5, 2.0, 0.3), AgreementLabel::Better);
        assert_eq!(agreement_label_global(2.0, 2.2, 0.3), AgreementLabel::Equal);
        assert_eq!(agreement_label_global(1.0, 3.0, 0.3), AgreementLabel::Worse);
    }

    #[test]
    fn pairwise_labels() {
        assert_eq!(agreement_label_pairwise(0.1, 0.2), AgreementLabel::Equal);
        assert_eq!(agreement_label_pairwise(1.5, 0.2), AgreementLabel::Better);
        assert_eq!(agreement_label_pairwise(-0.8, 0.2), AgreementLabel::Worse);
    }

    #[test]
    fn confusion_identity_when_consistent() {
        let hi = GlobalVotes([0, 0, 10]);
        let lo = GlobalVotes([10, 0, 0]);
        let better = PairwiseVotes([0, 0, 0, 0, 5]);
        let worse = PairwiseVotes([5, 0, 0, 0, 0]);
        let equal = PairwiseVotes([0, 0, 5, 0, 0]);
        let pairs = [
            AgreementInput { first: &hi, second: &lo, relative: &better },
            AgreementInput { first: &lo, second: &hi, relative: &worse },
            AgreementInput { first: &hi, second: &hi, relative: &equal },
        ];
        let m = agreement_confusion(&pairs, 0.3, 0.2).unwrap();
        assert_eq!(m.rows, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(m.agreement_rate, 1.0);
        assert_eq!(m.unsupported, [false; 3]);
    }

    #[test]
    fn confusion_single_disagreeing_pair() {
        let hi = GlobalVotes([0, 0, 10]);
        let lo = GlobalVotes([10, 0, 0]);
        let equal = PairwiseVotes([0, 0, 5, 0, 0]);
        let m = agreement_confusion(
            &[AgreementInput { first: &hi, second: &lo, relative: &equal }],
            0.3,
            0.2,
        )
        .unwrap();
        assert_eq!(m.rows[0], [0.0, 1.0, 0.0]);
        assert_eq!(m.unsupported, [false, true, true]);
        assert_eq!(m.rows[1], [0.0; 3]);
        assert_eq!(m.agreement_rate, 0.0);
        assert!(m.to_csv().lines().count() == 4);
    }

    #[test]
    fn confusion_rejects_empty() {
        assert!(agreement_confusion(&[], 0.3, 0.2).is_err());
    }

    fn global_votes() -> impl Strategy<Value = GlobalVotes> {
        prop::array::uniform3(0u32..20)
            .prop_filter("non-empty", |c| c.iter().sum::<u32>() > 0)
            .prop_map(GlobalVotes)
    }

    fn pairwise_votes() -> impl Strategy<Value = PairwiseVotes> {
        prop::array::uniform5(0u32..8)
            .prop_filter("non-empty", |c| c.iter().sum::<u32>() > 0)
            .prop_map(PairwiseVotes)
    }

    proptest! {
        #[test]
        fn distribution_normalized_and_scale_invariant(v in global_votes(), k in 1u32..50) {
            let d = votes_to_distribution(&v).unwrap();
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scaled = GlobalVotes(v.0.map(|c| c * k));
            let ds = votes_to_distribution(&scaled).unwrap();
            for (a, b) in d.probs().iter().zip(ds.probs()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
            let m = mean_rating(&d);
            prop_assert!((1.0..=3.0).contains(&m));
        }

        #[test]
        fn pairwise_mean_in_range(v in pairwise_votes()) {
            let d = votes_to_distribution(&v).unwrap();
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let m = mean_rating(&d);
            prop_assert!((-2.0..=2.0).contains(&m));
        }

        #[test]
        fn global_label_mirror(a in 1.0f64..3.0, b in 1.0f64..3.0, c in 0.0f64..1.0) {
            prop_assert_eq!(agreement_label_global(a, b, c), agreement_label_global(b, a, c).mirrored());
        }

        #[test]
        fn wider_band_never_loses_equal_labels(
            pairs in prop::collection::vec((global_votes(), global_votes(), pairwise_votes()), 1..30),
            c_lo in 0.0f64..1.0, dc in 0.0f64..1.0,
        ) {
            let inputs: Vec<_> = pairs
                .iter()
                .map(|(a, b, r)| AgreementInput { first: a, second: b, relative: r })
                .collect();
            let narrow = agreement_confusion(&inputs, c_lo, c_lo).unwrap();
            let wide = agreement_confusion(&inputs, c_lo + dc, c_lo + dc).unwrap();
            let eq_rows = |m: &ConfusionMatrix| m.counts[1].iter().sum::<u64>();
            let eq_cols = |m: &ConfusionMatrix| (0..3).map(|r| m.counts[r][1]).sum::<u64>();
            prop_assert!(eq_rows(&wide) >= eq_rows(&narrow));
            prop_assert!(eq_cols(&wide) >= eq_cols(&narrow));
            for m in [&narrow, &wide] {
                for r in 0..3 {
                    let s: f64 = m.rows[r].iter().sum();
                    prop_assert!(m.unsupported[r] || (s - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
