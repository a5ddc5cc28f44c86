use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crowdrank::dataset::{self, Dataset, PairRef, Split};
use crowdrank::eval::{self, DistributionRule, EvalOptions, PredictMode};
use crowdrank::loss::{StandardScores, Supervision};
use crowdrank::model::{Checkpoint, Model};
use crowdrank::net::{Input, InputKind, NetworkParams, NetworkPlan};
use crowdrank::rating::{agreement_confusion, AgreementInput};
use crowdrank::sampler::{l2_normalize, sample_pairs, SampleOptions};
use crowdrank::synth::{self, SynthConfig};
use crowdrank::train::{train_from, EpochRecord, TrainConfig, TrainHistory};

#[derive(Parser)]
#[command(name = "crowdrank", version, about = "Learn attractiveness scores from crowd rating distributions")]
struct Cli {
    /// Worker threads for sampling and training. Results do not depend on it.
    #[arg(long, global = true, env = "CROWDRANK_THREADS", default_value_t = 1)]
    threads: usize,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known latent scores, plus a
    /// config.json for training on it.
    Synth {
        /// JSON config; only its `synth` section is read.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw similarity-weighted pairs from a feature list.
    SamplePairs {
        features: PathBuf,
        #[arg(long, default_value_t = 5)]
        per_item: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Never draw the same partner twice for one source.
        #[arg(long)]
        dedupe: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model; writes per-epoch checkpoints, model.ckpt and history.json.
    Train {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// JSON config with optional `train` and `plan` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model; writes report.json and roc.csv.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        pa: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5,0.6")]
        pb: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Distribution)]
        mode: ModeArg,
        /// Verdict rule in distribution mode.
        #[arg(long, value_enum, default_value_t = RuleArg::Margin)]
        rule: RuleArg,
        /// Equal band: on the expected label (`--rule expected`) or on the
        /// score gap (score-threshold mode, selected on train pairs if omitted).
        #[arg(long)]
        tau: Option<f64>,
        /// Score only pairs whose ground truth is not Equal.
        #[arg(long)]
        decided_only: bool,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Agreement between global and pairwise crowd ratings; writes confusion.json and confusion.csv.
    Agree {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        cg: f64,
        #[arg(long, default_value_t = 0.2)]
        cp: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the frames of a clip; writes scores.csv and prints the peak index.
    ScoreSeq {
        #[arg(long)]
        model: PathBuf,
        /// A directory of tensor files (sorted by name) or a features JSONL file.
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Distribution,
    ScoreThreshold,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Margin,
    Expected,
    Argmax,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Test,
    Train,
    All,
}

/// config.json. Every section is optional.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct ConfigFile {
    train: TrainConfig,
    plan: Option<NetworkPlan>,
    synth: SynthConfig,
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = read_config(config)?.synth;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = synth::generate(&cfg)?;
    data.write(out)?;
    // ready-made config for `train --config`
    let plan = cfg.input.default_plan();
    let ready = ConfigFile {
        train: synth::bench_train_config(Supervision::Hybrid),
        plan: Some(plan),
        synth: cfg,
    };
    write_json(&out.join("config.json"), &ready)?;
    log::info!(
        "wrote {} items and {} pairs to {}",
        data.dataset.items.len(),
        data.dataset.pairs.len(),
        out.display()
    );
    Ok(())
}

fn cmd_sample_pairs(features: &Path, opts: SampleOptions, out: Option<&Path>) -> Result<()> {
    let rows = dataset::read_features(features)?;
    let (ids, vecs) = rows.into_iter().map(|r| (r.id, r.feature)).unzip();
    let index = l2_normalize(ids, vecs)?;
    let refs: Vec<PairRef> = sample_pairs(&index, &opts)?
        .into_iter()
        .map(|(i, j)| PairRef {
            first: index.ids()[i].clone(),
            second: index.ids()[j].clone(),
        })
        .collect();
    match out {
        Some(p) => dataset::write_pair_refs(p, &refs)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            for r in &refs {
                writeln!(stdout, "{}", serde_json::to_string(r)?)?;
            }
        }
    }
    Ok(())
}

fn default_plan(ds: &Dataset) -> Result<NetworkPlan> {
    let Some(first) = ds.items.first() else {
        bail!("items file is empty");
    };
    Ok(match &first.input {
        Input::Feature(v) => NetworkPlan::default_feature(v.len()),
        Input::Image(t) => NetworkPlan::default_image(t.height, t.width, t.channels),
    })
}

fn cmd_train(
    items: &Path,
    pairs: &Path,
    config: Option<&Path>,
    init: Option<&Path>,
    seed: Option<u64>,
    threads: usize,
    out: &Path,
) -> Result<()> {
    let cfg_file = read_config(config)?;
    let mut cfg = cfg_file.train;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.threads = threads;
    cfg.validate()?;
    let ds = dataset::load_dataset(items, pairs)?;
    let model = match init {
        Some(p) => Checkpoint::load(p)?.model,
        None => {
            let plan = match cfg_file.plan {
                Some(p) => p,
                None => default_plan(&ds)?,
            };
            Model {
                network: NetworkParams::init(plan, cfg.seed)?,
                standard: StandardScores::default(),
            }
        }
    };
    fs::create_dir_all(out)?;
    let mut save_epoch = |m: &Model, rec: &EpochRecord, hist: &TrainHistory| -> crowdrank::Result<()> {
        let path = out.join(format!("epoch_{:03}.ckpt", rec.epoch + 1));
        Checkpoint::new(m.clone(), Some(cfg.clone()), hist.epochs.clone()).save(&path)
    };
    let result = train_from(&ds, model, &cfg, &mut save_epoch)?;
    Checkpoint::new(result.model, Some(cfg.clone()), result.history.epochs.clone()).save(&out.join("model.ckpt"))?;
    write_json(&out.join("history.json"), &result.history)?;
    if let Some(last) = result.history.epochs.last() {
        log::info!("final epoch loss {:.5}", last.mean_total);
    }
    Ok(())
}

fn cmd_eval(
    model: &Path,
    items: &Path,
    pairs: &Path,
    opts: EvalOptions,
    split: SplitArg,
    out: &Path,
) -> Result<()> {
    let model = Checkpoint::load(model)?.model;
    let ds = dataset::load_dataset(items, pairs)?;
    let (target, validation) = match split {
        SplitArg::Test => (ds.subset(Split::Test), Some(ds.subset(Split::Train))),
        SplitArg::Train => (ds.subset(Split::Train), None),
        SplitArg::All => (ds, None),
    };
    if target.items.is_empty() {
        bail!("no items in the selected split");
    }
    let (report, curve) = eval::evaluate(&model, &target, validation.as_ref(), &opts).map_err(|e| match e {
        crowdrank::Error::SingleClass => anyhow::anyhow!(
            "every item gets the same label at p_a = {}: ROC needs items with more and with at most that share of 3-star votes",
            opts.p_a
        ),
        e => e.into(),
    })?;
    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), &report)?;
    fs::write(out.join("roc.csv"), curve.to_csv())?;
    log::info!("AUC {:.4}, mean_Lg {:.4}, mean_Lr {:.4}", report.auc, report.mean_lg, report.mean_lr);
    Ok(())
}

fn cmd_agree(items: &Path, pairs: &Path, cg: f64, cp: f64, out: &Path) -> Result<()> {
    let ds = dataset::load_dataset(items, pairs)?;
    let inputs: Vec<AgreementInput> = ds
        .pairs
        .iter()
        .map(|p| AgreementInput {
            first: &ds.get(&p.first).expect("validated").global_votes,
            second: &ds.get(&p.second).expect("validated").global_votes,
            relative: &p.votes,
        })
        .collect();
    let m = agreement_confusion(&inputs, cg, cp)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("confusion.json"), &m)?;
    fs::write(out.join("confusion.csv"), m.to_csv())?;
    Ok(())
}

fn read_frames(path: &Path, plan: &NetworkPlan) -> Result<Vec<Input>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "json"));
        files.sort();
        files
            .iter()
            .map(|f| Ok(Input::Image(dataset::read_tensor(f)?)))
            .collect()
    } else {
        if !matches!(plan.input, InputKind::FeatureVector { .. }) {
            log::warn!("model expects images but {} is a feature list", path.display());
        }
        Ok(dataset::read_features(path)?.into_iter().map(|r| Input::Feature(r.feature)).collect())
    }
}

fn cmd_score_seq(model: &Path, frames: &Path, out: &Path) -> Result<()> {
    let model = Checkpoint::load(model)?.model;
    let inputs = read_frames(frames, &model.network.plan)?;
    let s = eval::score_sequence(&inputs, &model)?;
    let mut csv = String::from("frame_index,raw,normalized\n");
    for (i, (r, n)) in s.raw.iter().zip(&s.normalized).enumerate() {
        csv.push_str(&format!("{i},{r},{n}\n"));
    }
    fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", s.peak_index);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    match cli.command {
        Command::Synth { config, seed, out } => cmd_synth(config.as_deref(), seed, &out),
        Command::SamplePairs {
            features,
            per_item,
            seed,
            dedupe,
            out,
        } => cmd_sample_pairs(
            &features,
            SampleOptions {
                pairs_per_item: per_item,
                seed,
                dedupe,
                threads: cli.threads,
            },
            out.as_deref(),
        ),
        Command::Train {
            items,
            pairs,
            config,
            init,
            seed,
            out,
        } => cmd_train(&items, &pairs, config.as_deref(), init.as_deref(), seed, cli.threads, &out),
        Command::Eval {
            model,
            items,
            pairs,
            pa,
            pb,
            mode,
            rule,
            tau,
            decided_only,
            split,
            out,
        } => {
            let mode = match mode {
                ModeArg::ScoreThreshold => PredictMode::ScoreThreshold { tau },
                ModeArg::Distribution => PredictMode::Distribution(match rule {
                    RuleArg::Margin => DistributionRule::Margin,
                    RuleArg::Expected => DistributionRule::ExpectedLabel { tau: tau.unwrap_or(0.0) },
                    RuleArg::Argmax => DistributionRule::ArgmaxGroup,
                }),
            };
            let opts = EvalOptions {
                p_a: pa,
                p_bs: pb,
                mode,
                decided_only,
            };
            cmd_eval(&model, &items, &pairs, opts, split, &out)
        }
        Command::Agree { items, pairs, cg, cp, out } => cmd_agree(&items, &pairs, cg, cp, &out),
        Command::ScoreSeq { model, frames, out } => cmd_score_seq(&model, &frames, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
