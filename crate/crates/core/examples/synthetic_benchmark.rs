//! Train on the default synthetic benchmark and print held-out metrics,
//! accuracy for every verdict mode, and the accuracy a predictor that knew
//! the true latents could reach.
//!
//! cargo run --release -p crowdrank --example synthetic_benchmark -- [lr] [hybrid|global|pairwise]
//! SEED=3 overrides the synthetic seed.

use std::collections::HashMap;
use std::time::Instant;

use crowdrank::dataset::{Dataset, Split};
use crowdrank::eval::{
    evaluate, pairwise_accuracy, pairwise_ground_truth, score_pairs, DistributionRule, EvalOptions, PredictMode,
};
use crowdrank::loss::{StandardScores, Supervision};
use crowdrank::model::Model;
use crowdrank::rating::PairwiseVotes;
use crowdrank::synth::{bench_train_config, generate, rank_recovery_report, SynthConfig, SynthDataset};
use crowdrank::train::train;
use statrs::distribution::{ContinuousCDF, Normal};

const P_BS: [f64; 4] = [0.3, 0.4, 0.5, 0.6];

fn main() -> crowdrank::Result<()> {
    let mut args = std::env::args().skip(1);
    let positional = (args.next(), args.next());
    let mut cfg = SynthConfig::default();
    if let Ok(s) = std::env::var("SEED") {
        cfg.seed = s.parse().expect("SEED must be an integer");
    }
    let sup = match positional.1.as_deref() {
        Some("global") => Supervision::GlobalOnly,
        Some("pairwise") => Supervision::PairwiseOnly,
        _ => Supervision::Hybrid,
    };
    let mut tc = bench_train_config(sup);
    if let Some(lr) = positional.0 {
        tc.base_lr = lr.parse().expect("lr must be a number");
    }

    let synth = generate(&cfg)?;
    let start = Instant::now();
    let out = train(&synth.dataset, cfg.input.default_plan(), StandardScores::default(), &tc)?;
    for e in &out.history.epochs {
        println!(
            "epoch {} lr {:e} total {:.4} Lg {:.4} Lr {:.4}",
            e.epoch, e.lr, e.mean_total, e.mean_global, e.mean_relative
        );
    }
    println!("trained in {:?}", start.elapsed());

    let test = synth.dataset.subset(Split::Test);
    let train_split = synth.dataset.subset(Split::Train);
    let (report, _) = evaluate(&out.model, &test, Some(&train_split), &EvalOptions::default())?;
    println!("spearman {:.4}", rank_recovery_report(&out.model, &synth)?);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    modes(&out.model, &test, &train_split)?;
    ceiling(&synth, &test)
}

fn modes(model: &Model, test: &Dataset, val: &Dataset) -> crowdrank::Result<()> {
    let scored = score_pairs(model, test)?;
    let vscored = score_pairs(model, val)?;
    for mode in [
        PredictMode::Distribution(DistributionRule::Margin),
        PredictMode::Distribution(DistributionRule::ExpectedLabel { tau: 0.0 }),
        PredictMode::Distribution(DistributionRule::ArgmaxGroup),
        PredictMode::ScoreThreshold { tau: None },
    ] {
        let acc = pairwise_accuracy(&scored, &model.standard, &P_BS, mode, Some(&vscored), false)?;
        println!("{mode:?}: {:?}", acc.iter().map(|a| a.accuracy).collect::<Vec<_>>());
    }
    Ok(())
}

/// Expected accuracy of the Bayes-optimal verdict given the true latent gap,
/// summed exactly over every way the pairwise raters can split their votes.
fn ceiling(synth: &SynthDataset, test: &Dataset) -> crowdrank::Result<()> {
    let cfg = &synth.config;
    let normal = Normal::new(0.0, cfg.rater_noise_sigma).expect("positive sigma");
    let latent = |id: &str| synth.latents[synth.dataset.position(id).expect("known id")];
    let mut compositions = vec![];
    compose(0, cfg.raters_pairwise, &mut [0; 5], &mut compositions);
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    for pb in P_BS {
        let mut total = 0.0;
        for p in &test.pairs {
            let d = latent(&p.first) - latent(&p.second);
            let mut cdf = vec![0.0];
            cdf.extend(cfg.pairwise_cut_points.iter().map(|c| normal.cdf(c - d)));
            cdf.push(1.0);
            let probs: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
            let mut by_verdict = HashMap::new();
            for c in &compositions {
                let mut pr = fact(cfg.raters_pairwise);
                for k in 0..5 {
                    pr *= probs[k].powi(c[k] as i32) / fact(c[k]);
                }
                *by_verdict.entry(pairwise_ground_truth(&PairwiseVotes(*c), pb)?).or_insert(0.0) += pr;
            }
            total += by_verdict.values().copied().fold(0.0, f64::max);
        }
        println!("latent-oracle ceiling at p_b {pb}: {:.4}", total / test.pairs.len() as f64);
    }
    Ok(())
}

fn compose(k: usize, left: u32, cur: &mut [u32; 5], out: &mut Vec<[u32; 5]>) {
    if k == 4 {
        cur[4] = left;
        out.push(*cur);
        return;
    }
    for c in 0..=left {
        cur[k] = c;
        compose(k + 1, left - c, cur, out);
    }
}
