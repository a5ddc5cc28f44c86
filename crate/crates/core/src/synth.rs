//! Synthetic datasets with known latent attractiveness and simulated raters.
//!
//! Every item gets a latent score in `[0, 1]`. Its input is a fixed affine
//! embedding of the latent plus isotropic gaussian noise, so a model can
//! recover the ranking from inputs alone. Each global rater votes the bucket
//! of `latent + N(0, sigma)` under the global cut points; each pairwise
//! rater votes the bucket of `latent_i - latent_j + N(0, sigma)` under the
//! pairwise cut points. Pairs are drawn by the similarity-weighted sampler
//! within each split.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, FeatureLine, ItemRecord, PairRecord, Split};
use crate::error::{Error, Result};
use crate::eval::{spearman, Clip};
use crate::loss::{Supervision, StandardScores};
use crate::model::Model;
use crate::net::{ImageTensor, Input, NetworkPlan};
use crate::rating::{GlobalVotes, PairwiseVotes, GLOBAL_BUCKETS, PAIRWISE_BUCKETS};
use crate::sampler::{l2_normalize, sample_pairs, SampleOptions};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthInput {
    Feature { dim: usize },
    Image { height: usize, width: usize, channels: usize },
}

impl SynthInput {
    fn len(&self) -> usize {
        match *self {
            SynthInput::Feature { dim } => dim,
            SynthInput::Image { height, width, channels } => height * width * channels,
        }
    }

    /// Network plan matching this input kind.
    pub fn default_plan(&self) -> NetworkPlan {
        match *self {
            SynthInput::Feature { dim } => NetworkPlan::default_feature(dim),
            SynthInput::Image { height, width, channels } => NetworkPlan::default_image(height, width, channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_items: usize,
    pub input: SynthInput,
    /// Standard deviation of the per-dimension input noise.
    pub input_noise: f64,
    pub rater_noise_sigma: f64,
    pub raters_global: u32,
    pub raters_pairwise: u32,
    pub global_cut_points: [f64; GLOBAL_BUCKETS - 1],
    pub pairwise_cut_points: [f64; PAIRWISE_BUCKETS - 1],
    pub pairs_per_item: usize,
    pub test_fraction: f64,
    pub n_clips: usize,
    pub clip_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_items: 500,
            input: SynthInput::Feature { dim: 16 },
            input_noise: 0.01,
            rater_noise_sigma: 0.1,
            raters_global: 10,
            raters_pairwise: 5,
            global_cut_points: [0.35, 0.7],
            pairwise_cut_points: [-0.35, -0.1, 0.1, 0.35],
            pairs_per_item: 5,
            test_fraction: 0.25,
            n_clips: 20,
            clip_len: 12,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_items < 2 {
            return bad(format!("n_items must be at least 2, got {}", self.n_items));
        }
        if self.input.len() == 0 {
            return bad("input dimensions must be positive".into());
        }
        if !(self.rater_noise_sigma >= 0.0) || !(self.input_noise >= 0.0) {
            return bad("noise levels must be >= 0".into());
        }
        if self.raters_global == 0 || self.raters_pairwise == 0 || self.pairs_per_item == 0 {
            return bad("rater counts and pairs_per_item must be at least 1".into());
        }
        let increasing = |c: &[f64]| c.windows(2).all(|w| w[0] < w[1]) && c.iter().all(|x| x.is_finite());
        if !increasing(&self.global_cut_points) || !increasing(&self.pairwise_cut_points) {
            return bad("cut points must be finite and strictly increasing".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must be in [0, 1)".into());
        }
        let n_test = self.n_test();
        for (name, n) in [("train", self.n_items - n_test), ("test", n_test)] {
            if n == 1 || (name == "train" && n < 2) {
                return bad(format!("{name} split has {n} item(s); pair sampling needs at least 2"));
            }
        }
        if self.n_clips > 0 && self.clip_len == 0 {
            return bad("clip_len must be positive".into());
        }
        Ok(())
    }

    fn n_test(&self) -> usize {
        (self.n_items as f64 * self.test_fraction).round() as usize
    }
}

/// Affine map from a latent score to an input: `offset + latent * direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub offset: Vec<f64>,
    pub direction: Vec<f64>,
}

impl Embedding {
    fn new(rng: &mut ChaCha8Rng, input: SynthInput) -> Self {
        match input {
            SynthInput::Feature { dim } => {
                // unit-norm offset, direction of norm 2
                let mut unit = |scale: f64| {
                    let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    v.into_iter().map(|x| scale * x / n).collect::<Vec<f64>>()
                };
                let offset = unit(1.0);
                let direction = unit(2.0);
                Embedding { offset, direction }
            }
            SynthInput::Image { .. } => {
                // mid-grey base with a random +-0.4 pattern scaled by latent
                let n = input.len();
                Embedding {
                    offset: vec![0.3; n],
                    direction: (0..n).map(|_| if rng.random::<bool>() { 0.4 } else { 0.0 }).collect(),
                }
            }
        }
    }

    fn input(&self, latent: f64, noise: f64, kind: SynthInput, rng: &mut ChaCha8Rng) -> Input {
        let values: Vec<f64> = self
            .offset
            .iter()
            .zip(&self.direction)
            .map(|(o, d)| o + latent * d + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        match kind {
            SynthInput::Feature { .. } => Input::Feature(values),
            SynthInput::Image { height, width, channels } => Input::Image(ImageTensor {
                height,
                width,
                channels,
                data: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            }),
        }
    }
}

/// Index of the bucket containing `x`: the number of cut points `<= x`.
pub fn bucket(x: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| c <= x).count()
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub dataset: Dataset,
    /// Latent score per item, aligned with `dataset.items`.
    pub latents: Vec<f64>,
    pub embedding: Embedding,
    pub clips: Vec<Clip>,
    pub clip_latents: Vec<Vec<f64>>,
}

fn item_id(i: usize) -> String {
    format!("item{i:05}")
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let embedding = Embedding::new(&mut rng, config.input);
    let n = config.n_items;
    let latents: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut split = vec![Split::Train; n];
    for &i in &order[..config.n_test()] {
        split[i] = Split::Test;
    }

    let sigma = config.rater_noise_sigma;
    let noise = |rng: &mut ChaCha8Rng| sigma * rng.sample::<f64, _>(StandardNormal);
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let input = embedding.input(latents[i], config.input_noise, config.input, &mut rng);
        let mut counts = [0u32; GLOBAL_BUCKETS];
        for _ in 0..config.raters_global {
            counts[bucket(latents[i] + noise(&mut rng), &config.global_cut_points)] += 1;
        }
        items.push(ItemRecord {
            id: item_id(i),
            input,
            global_votes: GlobalVotes(counts),
            split: split[i],
        });
    }

    let mut pairs = Vec::with_capacity(n * config.pairs_per_item);
    for (k, which) in [Split::Train, Split::Test].into_iter().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| split[i] == which).collect();
        if members.len() < 2 {
            continue;
        }
        let index = l2_normalize(
            members.iter().map(|&i| item_id(i)).collect(),
            members.iter().map(|&i| items[i].input.values().to_vec()).collect(),
        )?;
        let drawn = sample_pairs(
            &index,
            &SampleOptions {
                pairs_per_item: config.pairs_per_item,
                seed: config.seed.wrapping_add(k as u64 + 1),
                ..Default::default()
            },
        )?;
        for (a, b) in drawn {
            let (i, j) = (members[a], members[b]);
            let mut counts = [0u32; PAIRWISE_BUCKETS];
            for _ in 0..config.raters_pairwise {
                let d = latents[i] - latents[j] + noise(&mut rng);
                counts[bucket(d, &config.pairwise_cut_points)] += 1;
            }
            pairs.push(PairRecord {
                first: item_id(i),
                second: item_id(j),
                votes: PairwiseVotes(counts),
            });
        }
    }

    let mut clips = Vec::with_capacity(config.n_clips);
    let mut clip_latents = Vec::with_capacity(config.n_clips);
    for _ in 0..config.n_clips {
        let len = config.clip_len;
        let peak = rng.random_range(0..len);
        let base = rng.random_range(0.0..0.3);
        let top = rng.random_range(0.7..1.0);
        let width = (len as f64 / 4.0).max(1.0);
        let lat: Vec<f64> = (0..len)
            .map(|t| {
                let z = (t as f64 - peak as f64) / width;
                base + (top - base) * (-z * z).exp()
            })
            .collect();
        let frames = lat
            .iter()
            .map(|&l| embedding.input(l, config.input_noise, config.input, &mut rng))
            .collect();
        clips.push(Clip { frames, peaks: vec![peak] });
        clip_latents.push(lat);
    }

    Ok(SynthDataset {
        config: config.clone(),
        dataset: Dataset::new(items, pairs)?,
        latents,
        embedding,
        clips,
        clip_latents,
    })
}

/// Ground truth written next to a generated dataset. Never read by training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: SynthConfig,
    pub embedding: Embedding,
    pub latents: Vec<(String, f64)>,
    pub clips: Vec<SidecarClip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarClip {
    /// Path of the frame list (feature JSONL) or frame directory, relative
    /// to the output directory.
    pub frames: String,
    pub peaks: Vec<usize>,
    pub latents: Vec<f64>,
}

impl SynthDataset {
    /// Writes `items.jsonl`, `pairs.jsonl`, `latents.json` and the clips.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        dataset::write_items(&out_dir.join("items.jsonl"), &self.dataset.items)?;
        dataset::write_pairs(&out_dir.join("pairs.jsonl"), &self.dataset.pairs)?;
        let mut clips = Vec::with_capacity(self.clips.len());
        if !self.clips.is_empty() {
            fs::create_dir_all(out_dir.join("clips"))?;
        }
        for (c, clip) in self.clips.iter().enumerate() {
            let rel = match self.config.input {
                SynthInput::Feature { .. } => {
                    let rel = format!("clips/clip{c:03}.jsonl");
                    let rows: Vec<FeatureLine> = clip
                        .frames
                        .iter()
                        .enumerate()
                        .map(|(t, f)| FeatureLine {
                            id: format!("clip{c:03}_frame{t:03}"),
                            feature: f.values().to_vec(),
                        })
                        .collect();
                    dataset::write_features(&out_dir.join(&rel), &rows)?;
                    rel
                }
                SynthInput::Image { .. } => {
                    let rel = format!("clips/clip{c:03}");
                    fs::create_dir_all(out_dir.join(&rel))?;
                    for (t, f) in clip.frames.iter().enumerate() {
                        if let Input::Image(tensor) = f {
                            dataset::write_tensor(&out_dir.join(&rel).join(format!("frame{t:03}.json")), tensor)?;
                        }
                    }
                    rel
                }
            };
            clips.push(SidecarClip {
                frames: rel,
                peaks: clip.peaks.clone(),
                latents: self.clip_latents[c].clone(),
            });
        }
        let sidecar = Sidecar {
            config: self.config.clone(),
            embedding: self.embedding.clone(),
            latents: self
                .dataset
                .items
                .iter()
                .zip(&self.latents)
                .map(|(it, &l)| (it.id.clone(), l))
                .collect(),
            clips,
        };
        fs::write(out_dir.join("latents.json"), serde_json::to_string_pretty(&sidecar)? + "\n")?;
        Ok(())
    }
}

/// Hybrid loss of one pair by direct summation over normalized
/// probabilities. Shares no code with the training loss.
pub fn brute_force_loss(
    s1: f64,
    s2: f64,
    global1: &[f64],
    global2: &[f64],
    relative: &[f64],
    standard: &StandardScores,
) -> f64 {
    fn kernel_probs(x: f64, centers: &[f64]) -> Vec<f64> {
        let mut weights = Vec::new();
        let mut z = 0.0;
        for c in centers {
            let w = (-(x - c).powi(2)).exp();
            weights.push(w);
            z += w;
        }
        weights.iter().map(|w| w / z).collect()
    }
    fn ce(target: &[f64], pred: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..target.len() {
            if target[i] != 0.0 {
                total -= target[i] * pred[i].ln();
            }
        }
        total
    }
    let g = standard.global_anchors;
    let lg1 = ce(global1, &kernel_probs(s1, &g));
    let lg2 = ce(global2, &kernel_probs(s2, &g));
    let near = standard.relative_log_gaps[0].exp();
    let far = near + standard.relative_log_gaps[1].exp();
    let rel = [-far, -near, 0.0, near, far];
    let lr = ce(relative, &kernel_probs(s1 - s2, &rel));
    let mut lambda = 0.0;
    for k in 0..global1.len() {
        lambda += (global1[k] - global2[k]).powi(2);
    }
    if lambda > 1.0 {
        lambda = 1.0;
    }
    lambda * (lg1 + lg2) + (1.0 - lambda) * lr
}

/// Spearman correlation between model scores and latents on the test split.
pub fn rank_recovery_report(model: &Model, synth: &SynthDataset) -> Result<f64> {
    let (mut scores, mut latents) = (Vec::new(), Vec::new());
    for (item, &latent) in synth.dataset.items.iter().zip(&synth.latents) {
        if item.split == Split::Test {
            scores.push(model.score(&item.input)?);
            latents.push(latent);
        }
    }
    if scores.len() < 3 {
        return Err(Error::TooFewItems {
            needed: 3,
            actual: scores.len(),
        });
    }
    spearman(&scores, &latents)
}

/// Training settings used for the synthetic benchmark. The learning rate is
/// far above the pretrained-backbone default because the network here
/// starts from random weights.
pub fn bench_train_config(supervision: Supervision) -> TrainConfig {
    TrainConfig {
        base_lr: 3e-2,
        supervision,
        ..TrainConfig::default()
    }
}
