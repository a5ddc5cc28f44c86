//! Two-stage mini-batch SGD over rated pairs.
//!
//! Stage 1 keeps the backbone layers frozen; stage 2 trains everything with
//! a step-decayed learning rate. Standard scores train in both stages.
//! Each step minimizes the mean hybrid loss of a batch with plain SGD.
//!
//! Per-pair gradients are computed independently (optionally on several
//! threads) and summed in batch order, so results are bitwise identical for
//! any thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PairRecord, Split};
use crate::error::{Error, Result};
use crate::loss::{hybrid_loss, LossGrads, PairTargets, StandardScores, Supervision};
use crate::model::Model;
use crate::net::{self, NetworkParams, NetworkPlan, ParamGrads};
use crate::rating::{votes_to_distribution, RatingDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub base_lr: f64,
    pub decay_factor: f64,
    /// Stage-2 epochs between learning-rate decays.
    pub decay_every: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub supervision: Supervision,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1_epochs: 2,
            stage2_epochs: 6,
            base_lr: 1e-6,
            decay_factor: 0.1,
            decay_every: 2,
            batch_size: 16,
            seed: 0,
            supervision: Supervision::Hybrid,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be finite and >= 0, got {}", self.base_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay_factor must be in (0, 1], got {}", self.decay_factor)));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Backbone frozen.
    Head = 1,
    /// Everything trainable, decaying learning rate.
    Full = 2,
}

/// Learning rate for an epoch counted from the start of its stage.
pub fn lr_at(stage: Stage, epoch_in_stage: usize, config: &TrainConfig) -> f64 {
    match stage {
        Stage::Head => config.base_lr,
        Stage::Full => {
            let decays = (epoch_in_stage / config.decay_every) as i32;
            config.base_lr * config.decay_factor.powi(decays)
        }
    }
}

/// Running means over the mini-batches of one epoch. Each pair's loss is
/// measured with the parameters in force when its batch was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    pub lr: f64,
    pub mean_total: f64,
    /// Mean per-image global loss, `(Lg1 + Lg2) / 2` averaged over pairs.
    pub mean_global: f64,
    pub mean_relative: f64,
    pub mean_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub history: TrainHistory,
}

/// Crowd distributions for one pair, resolved to item positions.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub first: usize,
    pub second: usize,
    pub global1: RatingDistribution,
    pub global2: RatingDistribution,
    pub relative: RatingDistribution,
}

impl PreparedPair {
    pub fn targets(&self) -> PairTargets<'_> {
        PairTargets {
            global1: &self.global1,
            global2: &self.global2,
            relative: &self.relative,
        }
    }
}

/// Resolves pairs against the dataset and converts votes to distributions.
pub fn prepare_pairs<'a>(dataset: &Dataset, pairs: impl IntoIterator<Item = &'a PairRecord>) -> Result<Vec<PreparedPair>> {
    pairs
        .into_iter()
        .map(|p| {
            let missing = |id: &str| Error::Dataset(format!("pair ({}, {}): unknown item `{id}`", p.first, p.second));
            let first = dataset.position(&p.first).ok_or_else(|| missing(&p.first))?;
            let second = dataset.position(&p.second).ok_or_else(|| missing(&p.second))?;
            Ok(PreparedPair {
                first,
                second,
                global1: votes_to_distribution(&dataset.items[first].global_votes)?,
                global2: votes_to_distribution(&dataset.items[second].global_votes)?,
                relative: votes_to_distribution(&p.votes)?,
            })
        })
        .collect()
}

struct PairStep {
    total: f64,
    global: f64,
    relative: f64,
    lambda: f64,
    net: ParamGrads,
    standard: LossGrads,
}

fn pair_step(
    dataset: &Dataset,
    pair: &PreparedPair,
    model: &Model,
    supervision: Supervision,
) -> Result<PairStep> {
    let a = &dataset.items[pair.first];
    let b = &dataset.items[pair.second];
    let (scores, c1, c2) = net::siamese_forward(&a.input, &b.input, &model.network)?;
    let bundle = hybrid_loss(scores, &pair.targets(), &model.standard, supervision)?;
    let mut grads = model.network.zero_grads();
    net::backward_into(&c1, bundle.grads.d_s1, &model.network, &mut grads)?;
    net::backward_into(&c2, bundle.grads.d_s2, &model.network, &mut grads)?;
    Ok(PairStep {
        total: bundle.total,
        global: 0.5 * (bundle.global1 + bundle.global2),
        relative: bundle.relative,
        lambda: bundle.lambda,
        net: grads,
        standard: bundle.grads,
    })
}

fn shuffled_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Observer called after every completed epoch.
pub trait EpochObserver {
    fn on_epoch(&mut self, model: &Model, record: &EpochRecord, history: &TrainHistory) -> Result<()>;
}

impl<F: FnMut(&Model, &EpochRecord, &TrainHistory) -> Result<()>> EpochObserver for F {
    fn on_epoch(&mut self, model: &Model, record: &EpochRecord, history: &TrainHistory) -> Result<()> {
        self(model, record, history)
    }
}

/// Trains on the train-split pairs of `dataset`, starting from `init`.
pub fn train_from(
    dataset: &Dataset,
    init: Model,
    config: &TrainConfig,
    observer: &mut dyn EpochObserver,
) -> Result<TrainOutput> {
    config.validate()?;
    let plan_input = init.network.plan.input_shape();
    if let Some(bad) = dataset.items.iter().find(|it| it.input.shape() != plan_input) {
        return Err(Error::Dataset(format!(
            "item `{}` has input shape {}, network expects {plan_input}",
            bad.id,
            bad.input.shape()
        )));
    }
    let records: Vec<&PairRecord> = dataset.pairs_in(Split::Train).collect();
    let skipped = dataset.pairs.len() - records.len();
    if skipped > 0 {
        log::info!("training on {} train-split pairs, ignoring {skipped} test-split pairs", records.len());
    }
    let pairs = prepare_pairs(dataset, records.iter().copied())?;

    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?,
        )
    } else {
        None
    };

    let mut model = init;
    let mut history = TrainHistory { epochs: Vec::new() };
    let mut epoch = 0;
    for (stage, n_epochs) in [(Stage::Head, config.stage1_epochs), (Stage::Full, config.stage2_epochs)] {
        model.network.set_backbone_frozen(stage == Stage::Head);
        for e in 0..n_epochs {
            let lr = lr_at(stage, e, config);
            let order = shuffled_order(pairs.len(), config.seed, epoch);
            let mut sums = [0.0f64; 4];
            for batch in order.chunks(config.batch_size) {
                let steps: Vec<Result<PairStep>> = match &pool {
                    Some(pool) => pool.install(|| {
                        batch
                            .par_iter()
                            .map(|&k| pair_step(dataset, &pairs[k], &model, config.supervision))
                            .collect()
                    }),
                    None => batch
                        .iter()
                        .map(|&k| pair_step(dataset, &pairs[k], &model, config.supervision))
                        .collect(),
                };
                let mut net_grads = model.network.zero_grads();
                let mut std_grads = LossGrads::default();
                for (&k, step) in batch.iter().zip(steps) {
                    let step = step?;
                    if !step.total.is_finite() {
                        let r = records[k];
                        return Err(Error::NonFiniteLoss {
                            first: r.first.clone(),
                            second: r.second.clone(),
                            epoch,
                        });
                    }
                    sums[0] += step.total;
                    sums[1] += step.global;
                    sums[2] += step.relative;
                    sums[3] += step.lambda;
                    net_grads.add_scaled(&step.net, 1.0);
                    for i in 0..3 {
                        std_grads.d_global_anchors[i] += step.standard.d_global_anchors[i];
                    }
                    for i in 0..2 {
                        std_grads.d_relative_log_gaps[i] += step.standard.d_relative_log_gaps[i];
                    }
                }
                let scale = 1.0 / batch.len() as f64;
                net_grads.scale(scale);
                model.network.sgd_step(&net_grads, lr);
                for i in 0..3 {
                    model.standard.global_anchors[i] -= lr * (scale * std_grads.d_global_anchors[i]);
                }
                for i in 0..2 {
                    model.standard.relative_log_gaps[i] -= lr * (scale * std_grads.d_relative_log_gaps[i]);
                }
            }
            let n = pairs.len().max(1) as f64;
            let record = EpochRecord {
                epoch,
                stage,
                lr,
                mean_total: sums[0] / n,
                mean_global: sums[1] / n,
                mean_relative: sums[2] / n,
                mean_lambda: sums[3] / n,
            };
            log::info!(
                "epoch {epoch} (stage {}) lr {lr:e}: loss {:.5} Lg {:.5} Lr {:.5}",
                stage as u8,
                record.mean_total,
                record.mean_global,
                record.mean_relative
            );
            history.epochs.push(record.clone());
            observer.on_epoch(&model, &record, &history)?;
            epoch += 1;
        }
    }
    model.network.set_backbone_frozen(false);
    Ok(TrainOutput { model, history })
}

/// Initializes a network from `plan` (seeded by `config.seed`) and trains it.
pub fn train(dataset: &Dataset, plan: NetworkPlan, standard_init: StandardScores, config: &TrainConfig) -> Result<TrainOutput> {
    let network = NetworkParams::init(plan, config.seed)?;
    let init = Model {
        network,
        standard: standard_init,
    };
    train_from(dataset, init, config, &mut |_: &Model, _: &EpochRecord, _: &TrainHistory| Ok(()))
}

/// Mean losses of `model` over `pairs`, evaluated at fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub mean_total: f64,
    pub mean_global: f64,
    pub mean_relative: f64,
    pub mean_lambda: f64,
}

pub fn evaluate_pair_losses(dataset: &Dataset, pairs: &[PreparedPair], model: &Model, supervision: Supervision) -> Result<LossSummary> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair set"));
    }
    let mut sums = [0.0; 4];
    for p in pairs {
        let a = &dataset.items[p.first];
        let b = &dataset.items[p.second];
        let (scores, _, _) = net::siamese_forward(&a.input, &b.input, &model.network)?;
        let bundle = hybrid_loss(scores, &p.targets(), &model.standard, supervision)?;
        sums[0] += bundle.total;
        sums[1] += 0.5 * (bundle.global1 + bundle.global2);
        sums[2] += bundle.relative;
        sums[3] += bundle.lambda;
    }
    let n = pairs.len() as f64;
    Ok(LossSummary {
        mean_total: sums[0] / n,
        mean_global: sums[1] / n,
        mean_relative: sums[2] / n,
        mean_lambda: sums[3] / n,
    })
}
