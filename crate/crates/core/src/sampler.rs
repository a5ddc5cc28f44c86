//! Similarity-weighted pair sampling.
//!
//! Every source item `i` draws partners `j != i` with probability
//! proportional to `exp(f_i . f_j)` over L2-normalized features.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; source
//! item `i` reads from stream `i` of that key, so draws for one item do not
//! depend on any other item and the pair list is identical on every
//! platform and thread count. A draw maps a uniform `u` in `[0, 1)` through
//! the cumulative distribution in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{dot, softmax};

/// Item ids with unit-norm feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureIndex {
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
}

impl FeatureIndex {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<FeatureIndex> {
    if ids.len() != vectors.len() {
        return Err(Error::LengthMismatch {
            expected: ids.len(),
            actual: vectors.len(),
        });
    }
    if ids.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            actual: ids.len(),
        });
    }
    let dim = vectors[0].len();
    let mut features = Vec::with_capacity(vectors.len());
    for (id, mut v) in ids.iter().zip(vectors) {
        if v.len() != dim {
            return Err(Error::Dataset(format!(
                "feature of `{id}` has length {}, expected {dim}",
                v.len()
            )));
        }
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroFeature(id.clone()));
        }
        for x in &mut v {
            *x /= norm;
        }
        features.push(v);
    }
    Ok(FeatureIndex { ids, features })
}

/// Logits `f_i . f_j` for all `j`, with `-inf` at `j == i`.
pub fn pair_logits(i: usize, index: &FeatureIndex) -> Vec<f64> {
    let fi = &index.features[i];
    index
        .features
        .iter()
        .enumerate()
        .map(|(j, fj)| if j == i { f64::NEG_INFINITY } else { dot(fi, fj) })
        .collect()
}

/// Selection probability of every partner for source `i`; entry `i` is 0.
pub fn pair_sampling_probs(i: usize, index: &FeatureIndex) -> Result<Vec<f64>> {
    if i >= index.len() {
        return Err(Error::OutOfRange {
            index: i,
            len: index.len(),
        });
    }
    Ok(softmax(&pair_logits(i, index)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOptions {
    pub pairs_per_item: usize,
    pub seed: u64,
    /// Redraw when a partner was already drawn for the same source.
    pub dedupe: bool,
    pub threads: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            pairs_per_item: 5,
            seed: 0,
            dedupe: false,
            threads: 1,
        }
    }
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

fn sample_for_source(i: usize, index: &FeatureIndex, opts: &SampleOptions) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(i as u64);
    let mut probs = softmax(&pair_logits(i, index));
    let mut out = Vec::with_capacity(opts.pairs_per_item);
    for _ in 0..opts.pairs_per_item {
        let j = draw(&probs, &mut rng);
        if opts.dedupe {
            probs[j] = 0.0;
        }
        out.push((i, j));
    }
    out
}

/// Draws `pairs_per_item` partners for source item `i` alone. The draws are
/// the ones [`sample_pairs`] makes for that source.
pub fn sample_partners(i: usize, index: &FeatureIndex, opts: &SampleOptions) -> Result<Vec<usize>> {
    if i >= index.len() {
        return Err(Error::OutOfRange {
            index: i,
            len: index.len(),
        });
    }
    if index.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            actual: index.len(),
        });
    }
    Ok(sample_for_source(i, index, opts).into_iter().map(|(_, j)| j).collect())
}

/// Draws `pairs_per_item` partners for every source item, in source order.
pub fn sample_pairs(index: &FeatureIndex, opts: &SampleOptions) -> Result<Vec<(usize, usize)>> {
    if opts.pairs_per_item == 0 {
        return Err(Error::Config("pairs_per_item must be at least 1".into()));
    }
    if index.len() < 2 {
        return Err(Error::TooFewItems {
            needed: 2,
            actual: index.len(),
        });
    }
    if opts.dedupe && opts.pairs_per_item > index.len() - 1 {
        return Err(Error::Config(format!(
            "cannot draw {} distinct partners from {} items",
            opts.pairs_per_item,
            index.len() - 1
        )));
    }
    let per_source: Vec<Vec<(usize, usize)>> = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            (0..index.len())
                .into_par_iter()
                .map(|i| sample_for_source(i, index, opts))
                .collect()
        })
    } else {
        (0..index.len())
            .map(|i| sample_for_source(i, index, opts))
            .collect()
    };
    Ok(per_source.into_iter().flatten().collect())
}
