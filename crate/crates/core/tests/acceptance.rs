//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use crowdrank::dataset::Split;
use crowdrank::eval::{
    evaluate, normalize_sequence, pairwise_ground_truth, pairwise_predict, roc, score_sequence, DistributionRule,
    EvalOptions, EvaluationReport, PairwiseVerdict, PredictMode,
};
use crowdrank::loss::{global_probs, hybrid_loss, pairwise_probs, ScorePair, StandardScores, Supervision};
use crowdrank::model::Model;
use crowdrank::net::{Input, NetworkParams};
use crowdrank::rating::{votes_to_distribution, GlobalVotes, PairwiseVotes, RatingDistribution};
use crowdrank::sampler::{l2_normalize, pair_sampling_probs, sample_pairs, sample_partners, SampleOptions};
use crowdrank::synth::{bench_train_config, brute_force_loss, generate, rank_recovery_report, SynthConfig, SynthDataset};
use crowdrank::train::{lr_at, train, train_from, Stage, TrainConfig};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(101);
    let mut loss_worst = 0.0f64;
    for sup in [Supervision::Hybrid, Supervision::GlobalOnly, Supervision::PairwiseOnly] {
        for _ in 0..1000 {
            loss_worst = loss_worst.max(LossInstance::random(&mut rng).worst_grad_error(sup));
        }
    }
    let (mut net_worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for plan in [tiny_image_plan(), tiny_feature_plan()] {
        let mut n = 0;
        while n < 500 {
            match siamese_worst_error(&plan, &mut rng) {
                Some(e) => {
                    net_worst = net_worst.max(e);
                    n += 1;
                }
                None => skipped += 1,
            }
        }
        checked += n;
    }
    let elapsed = start.elapsed();
    check(
        loss_worst < 1e-6 && net_worst < 1e-5 && elapsed < Duration::from_secs(60),
        format!(
            "loss head worst rel err {loss_worst:.2e} (< 1e-6, 3000 instances); network worst {net_worst:.2e} (< 1e-5, {checked} instances, {skipped} near-kink draws redrawn); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2_distributions() -> Outcome {
    let mut rng = rng(102);
    let mut worst = 0.0f64;
    let mut bad = 0usize;
    let mut record = |p: &[f64]| {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            bad += 1;
        }
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    };
    for k in 0..100_000 {
        let s = match k % 4 {
            0 => 1e6,
            1 => -1e6,
            _ => rng.random_range(-1e3..1e3),
        };
        let mut anchors = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        anchors.sort_by(f64::total_cmp);
        record(&global_probs(s, &anchors));
        let st = StandardScores {
            global_anchors: anchors,
            relative_log_gaps: [rng.random_range(-5.0..3.0), rng.random_range(-5.0..3.0)],
        };
        record(&pairwise_probs(s, &st.relative_anchor_vector()));
        let g = GlobalVotes([rng.random_range(0..50), rng.random_range(0..50), rng.random_range(1..50)]);
        record(votes_to_distribution(&g).unwrap().probs());
        let mut r = [0u32; 5];
        r.iter_mut().for_each(|c| *c = rng.random_range(0..20));
        r[rng.random_range(0..5)] += 1;
        record(votes_to_distribution(&PairwiseVotes(r)).unwrap().probs());
    }
    check(
        worst <= 1e-12 && bad == 0,
        format!("400000 vectors incl. |s| = 1e6: max |sum - 1| = {worst:.1e} (<= 1e-12), {bad} non-finite or negative"),
    )
}

fn criterion_3_brute_force() -> Outcome {
    let mut rng = rng(103);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let inst = LossInstance::random(&mut rng);
        let fast = hybrid_loss(inst.pair, &inst.targets(), &inst.standard, Supervision::Hybrid).unwrap().total;
        let slow = brute_force_loss(
            inst.pair.s1,
            inst.pair.s2,
            inst.g1.probs(),
            inst.g2.probs(),
            inst.r.probs(),
            &inst.standard,
        );
        worst = worst.max((fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE));
    }
    check(worst <= 1e-10, format!("10000 instances: worst relative difference {worst:.2e} (<= 1e-10)"))
}

fn criterion_4_symmetry() -> Outcome {
    let mut rng = rng(104);
    let mut failures = Vec::new();
    let modes = [
        PredictMode::Distribution(DistributionRule::Margin),
        PredictMode::Distribution(DistributionRule::ExpectedLabel { tau: 0.0 }),
        PredictMode::Distribution(DistributionRule::ExpectedLabel { tau: 0.3 }),
        PredictMode::Distribution(DistributionRule::ArgmaxGroup),
        PredictMode::ScoreThreshold { tau: Some(0.25) },
    ];
    for _ in 0..10_000 {
        let (a, b) = (rng.random_range(-10.0..3.0), rng.random_range(-10.0..3.0));
        let st = StandardScores {
            relative_log_gaps: [a, b],
            ..Default::default()
        };
        let v = st.relative_anchor_vector();
        if !(v[0] < v[1] && v[1] < v[2] && v[2] < v[3] && v[3] < v[4]) || (0..5).any(|i| v[i] != -v[4 - i]) {
            failures.push(format!("anchors at ({a}, {b}): {v:?}"));
        }
        let d = rng.random_range(-6.0..6.0);
        let (p, q) = (pairwise_probs(d, &v), pairwise_probs(-d, &v));
        if (0..5).any(|i| (p[i] - q[4 - i]).abs() > 1e-15) {
            failures.push(format!("probs not mirrored at gap {d}"));
        }
        let pair = ScorePair {
            s1: rng.random_range(-3.0..3.0),
            s2: rng.random_range(-3.0..3.0),
        };
        let p_b = [0.3, 0.4, 0.5, 0.6][rng.random_range(0..4)];
        for m in modes {
            if pairwise_predict(pair, &st, m, p_b) != pairwise_predict(pair.swapped(), &st, m, p_b).reversed() {
                failures.push(format!("{m:?} verdict not antisymmetric at {pair:?}"));
            }
        }
        let mut c = [0u32; 5];
        c.iter_mut().for_each(|x| *x = rng.random_range(0..4));
        c[2] += 1;
        let votes = PairwiseVotes(c);
        if pairwise_ground_truth(&votes, p_b).unwrap() != pairwise_ground_truth(&votes.reversed(), p_b).unwrap().reversed() {
            failures.push(format!("ground truth not antisymmetric for {c:?}"));
        }
        let g = RatingDistribution::global(random_probs(&mut rng)).unwrap();
        let r = RatingDistribution::pairwise(random_probs(&mut rng)).unwrap();
        let t = crowdrank::loss::PairTargets {
            global1: &g,
            global2: &g,
            relative: &r,
        };
        let bundle = hybrid_loss(pair, &t, &st, Supervision::Hybrid).unwrap();
        if bundle.lambda != 0.0 {
            failures.push(format!("lambda {} for equal global distributions", bundle.lambda));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "10000 draws: anchor order and odd symmetry, mirrored probs, swap-antisymmetric verdicts (5 rules + crowd), lambda = 0 on equal globals; {} violations{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn criterion_5_sampler() -> Outcome {
    let mut rng = rng(105);
    let n = 50;
    let ids: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
    let vecs: Vec<Vec<f64>> = (0..n).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let index = l2_normalize(ids, vecs).unwrap();
    let draws = 100_000usize;
    let opts = SampleOptions {
        pairs_per_item: draws,
        seed: 5,
        ..Default::default()
    };
    let mut outside = Vec::new();
    let sources = [0, 17, 49];
    for &i in &sources {
        let probs = pair_sampling_probs(i, &index).unwrap();
        let partners = sample_partners(i, &index, &opts).unwrap();
        let mut counts = vec![0usize; n];
        partners.iter().for_each(|&j| counts[j] += 1);
        for j in 0..n {
            let mean = draws as f64 * probs[j];
            let sd = (draws as f64 * probs[j] * (1.0 - probs[j])).sqrt();
            if (counts[j] as f64 - mean).abs() > 3.0 * sd {
                outside.push((i, j, counts[j], mean));
            }
        }
    }
    let small = SampleOptions {
        pairs_per_item: 40,
        seed: 9,
        ..Default::default()
    };
    let a = sample_pairs(&index, &small).unwrap();
    let b = sample_pairs(&index, &small).unwrap();
    let c = sample_pairs(&index, &SampleOptions { threads: 4, ..small }).unwrap();
    let same = a == b && a == c;
    check(
        outside.is_empty() && same,
        format!(
            "10^5 draws from each of sources {sources:?} on 50 items: {} cells outside 3 sigma; repeat and 4-thread runs identical: {same}",
            outside.len()
        ),
    )
}

fn criterion_6_schedule() -> Outcome {
    let cfg = TrainConfig::default();
    let got: Vec<f64> = (0..6).map(|e| lr_at(Stage::Full, e, &cfg)).collect();
    let want = [1e-6, 1e-6, 1e-7, 1e-7, 1e-8, 1e-8];
    let schedule_ok = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-12 * w);

    let synth = generate(&SynthConfig {
        n_items: 60,
        n_clips: 0,
        ..Default::default()
    })
    .unwrap();
    let init = Model {
        network: NetworkParams::init(synth.config.input.default_plan(), 1).unwrap(),
        standard: StandardScores::default(),
    };
    let stage1 = TrainConfig {
        stage1_epochs: 2,
        stage2_epochs: 0,
        base_lr: 0.1,
        ..Default::default()
    };
    let out = train_from(&synth.dataset, init.clone(), &stage1, &mut |_: &Model, _: &_, _: &_| Ok(())).unwrap();
    let backbone = init.network.plan.backbone_layers;
    let bits = |m: &Model, range: std::ops::Range<usize>| -> Vec<u64> {
        m.network.layers[range]
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|x| x.to_bits())
            .collect()
    };
    let n_layers = init.network.layers.len();
    let frozen_same = bits(&init, 0..backbone) == bits(&out.model, 0..backbone);
    let head_moved = bits(&init, backbone..n_layers) != bits(&out.model, backbone..n_layers);
    check(
        schedule_ok && frozen_same && head_moved,
        format!("stage-2 lr {got:?}; stage 1 backbone bitwise unchanged: {frozen_same}, head updated: {head_moved}"),
    )
}

struct Bench {
    synth: SynthDataset,
    hybrid: Model,
    train_time: Duration,
}

fn report(model: &Model, synth: &SynthDataset) -> EvaluationReport {
    let test = synth.dataset.subset(Split::Test);
    let val = synth.dataset.subset(Split::Train);
    evaluate(model, &test, Some(&val), &EvalOptions::default()).unwrap().0
}

fn criterion_7_recovery(bench: &Bench) -> Outcome {
    let r = report(&bench.hybrid, &bench.synth);
    let rho = rank_recovery_report(&bench.hybrid, &bench.synth).unwrap();
    let acc = r.pairwise.iter().find(|a| a.p_b == 0.5).unwrap().accuracy;
    check(
        bench.train_time < Duration::from_secs(600) && rho > 0.8 && acc > 0.9 && r.auc > 0.9,
        format!(
            "500 items / {} pairs, sigma 0.1: trained in {:.1}s; held-out spearman {rho:.4} (> 0.8), accuracy at p_b 0.5 {acc:.4} (> 0.9), AUC at p_a 0.2 {:.4} (> 0.9)",
            bench.synth.dataset.pairs.len(),
            bench.train_time.as_secs_f64(),
            r.auc
        ),
    )
}

fn criterion_8_ablation(bench: &Bench) -> Outcome {
    const TOL: f64 = 0.02;
    let plan = bench.synth.config.input.default_plan();
    let run = |sup| {
        let out = train(&bench.synth.dataset, plan.clone(), StandardScores::default(), &bench_train_config(sup)).unwrap();
        report(&out.model, &bench.synth)
    };
    let hybrid = report(&bench.hybrid, &bench.synth);
    let global = run(Supervision::GlobalOnly);
    let pairwise = run(Supervision::PairwiseOnly);
    check(
        hybrid.mean_lg <= pairwise.mean_lg * (1.0 + TOL) && hybrid.mean_lr <= global.mean_lr * (1.0 + TOL),
        format!(
            "held-out mean_Lg hybrid {:.4} vs pairwise-only {:.4}; mean_Lr hybrid {:.4} vs global-only {:.4} (2% tolerance)",
            hybrid.mean_lg, pairwise.mean_lg, hybrid.mean_lr, global.mean_lr
        ),
    )
}

fn criterion_9_metrics() -> Outcome {
    let mut rng = rng(109);
    let scores: Vec<f64> = (0..200).map(|i| i as f64).collect();
    let labels: Vec<bool> = (0..200).map(|i| i >= 80).collect();
    let separated = roc(&scores, &labels).unwrap().auc;
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
    let random = roc(&scores, &labels).unwrap().auc;

    let mut compositions = 0;
    let mut mismatches = 0;
    for a in 0..=5u32 {
        for b in 0..=5 - a {
            for c in 0..=5 - a - b {
                for d in 0..=5 - a - b - c {
                    let e = 5 - a - b - c - d;
                    compositions += 1;
                    let votes = PairwiseVotes([a, b, c, d, e]);
                    // margin in fifths against p_b in fifths, all exact integers
                    let margin = (d + e) as i32 - (a + b) as i32;
                    for (p_b, fifths) in [(0.3, 1.5), (0.4, 2.0), (0.5, 2.5), (0.6, 3.0)] {
                        let hand = if margin as f64 > fifths {
                            PairwiseVerdict::FirstBetter
                        } else if (-margin) as f64 > fifths {
                            PairwiseVerdict::SecondBetter
                        } else {
                            PairwiseVerdict::Equal
                        };
                        if pairwise_ground_truth(&votes, p_b).unwrap() != hand {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
    }
    check(
        separated == 1.0 && (random - 0.5).abs() <= 0.02 && compositions == 126 && mismatches == 0,
        format!(
            "separated AUC {separated}; random AUC {random:.4} (0.5 +- 0.02); {compositions} vote compositions x 4 p_b, {mismatches} mismatches"
        ),
    )
}

fn criterion_10_sequences() -> Outcome {
    let mut rng = rng(110);
    let mut failures = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(1..40);
        let constant = rng.random_bool(0.2);
        let base = rng.random_range(-1e3..1e3);
        let raw: Vec<f64> = (0..len)
            .map(|_| if constant { base } else { base + rng.random_range(-50.0..50.0) * 10f64.powi(rng.random_range(-8..3)) })
            .collect();
        let distinct = raw.iter().any(|&x| x != raw[0]);
        let s = normalize_sequence(raw).unwrap();
        let ok = if distinct {
            s.normalized.iter().cloned().fold(f64::INFINITY, f64::min) == 0.0
                && s.normalized.iter().cloned().fold(f64::NEG_INFINITY, f64::max) == 1.0
                && s.normalized.iter().all(|x| (0.0..=1.0).contains(x))
        } else {
            s.normalized.iter().all(|&x| x == 0.5)
        };
        failures += usize::from(!ok);
    }
    // through the network: random frames, then a clip of one repeated frame
    let plan = tiny_image_plan();
    let model = Model {
        network: random_params(&plan, &mut rng),
        standard: StandardScores::default(),
    };
    for _ in 0..200 {
        let frames: Vec<Input> = (0..rng.random_range(2..8)).map(|_| random_input(&plan, &mut rng)).collect();
        let s = score_sequence(&frames, &model).unwrap();
        let distinct = s.raw.iter().any(|&x| x != s.raw[0]);
        let lo = s.normalized.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.normalized.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        failures += usize::from(distinct && (lo != 0.0 || hi != 1.0));
        let same = vec![frames[0].clone(); frames.len()];
        let s = score_sequence(&same, &model).unwrap();
        failures += usize::from(s.normalized.iter().any(|&x| x != 0.5));
    }
    check(failures == 0, format!("10000 fuzzed raw clips + 400 scored clips: {failures} violations"))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {n:>2} {name}: {detail}");
        results.push((n, name, outcome));
    };
    run(1, "gradient correctness", &criterion_1_gradients);
    run(2, "distribution sanity", &criterion_2_distributions);
    run(3, "oracle equivalence", &criterion_3_brute_force);
    run(4, "symmetry suite", &criterion_4_symmetry);
    run(5, "sampler fidelity", &criterion_5_sampler);
    run(6, "schedule fidelity", &criterion_6_schedule);

    let bench = catch_unwind(|| {
        let synth = generate(&SynthConfig::default()).unwrap();
        let start = Instant::now();
        let out = train(
            &synth.dataset,
            synth.config.input.default_plan(),
            StandardScores::default(),
            &bench_train_config(Supervision::Hybrid),
        )
        .unwrap();
        Bench {
            synth,
            hybrid: out.model,
            train_time: start.elapsed(),
        }
    });
    match &bench {
        Ok(b) => {
            run(7, "end-to-end recoverability", &|| criterion_7_recovery(b));
            run(8, "ablation direction", &|| criterion_8_ablation(b));
        }
        Err(_) => {
            run(7, "end-to-end recoverability", &|| Err("reference training failed".into()));
            run(8, "ablation direction", &|| Err("reference training failed".into()));
        }
    }
    run(9, "metric correctness", &criterion_9_metrics);
    run(10, "sequence contract", &criterion_10_sequences);

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
