//! Python bindings. Structured values (configs, reports, histories) cross the
//! boundary as JSON and arrive in Python as plain dicts and lists.

use std::path::PathBuf;

use crowdrank::dataset::{load_dataset, Dataset, Split};
use crowdrank::eval::{self, EvalOptions};
use crowdrank::loss::{self, PairTargets, ScorePair, StandardScores, Supervision};
use crowdrank::model::{Checkpoint, Model};
use crowdrank::net::{ImageTensor, Input, NetworkParams, NetworkPlan};
use crowdrank::rating::{self, GlobalVotes, PairwiseVotes, RatingDistribution};
use crowdrank::sampler::{self, SampleOptions};
use crowdrank::synth::{self, SynthConfig, SynthDataset};
use crowdrank::train::{self, TrainConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<T: DeserializeOwned + Default>(s: Option<&str>) -> PyResult<T> {
    s.map_or_else(|| Ok(T::default()), |s| serde_json::from_str(s).map_err(err))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_supervision(s: &str) -> PyResult<Supervision> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| err(format!("unknown supervision {s:?}")))
}

fn parse_split(s: &str) -> PyResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(err(format!("unknown split {s:?}"))),
    }
}

/// Feature vector or `(height, width, channels, data)` image.
#[derive(FromPyObject)]
enum PyInput {
    Feature(Vec<f64>),
    Image((usize, usize, usize, Vec<f64>)),
}

impl From<PyInput> for Input {
    fn from(x: PyInput) -> Self {
        match x {
            PyInput::Feature(v) => Input::Feature(v),
            PyInput::Image((height, width, channels, data)) => Input::Image(ImageTensor {
                height,
                width,
                channels,
                data,
            }),
        }
    }
}

#[pyclass(name = "Model", module = "pycrowdrank", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// Fresh network. `plan` is a JSON network plan; without it the default
    /// feature-vector plan for `feature_dim` is used.
    #[staticmethod]
    #[pyo3(signature = (feature_dim=None, plan=None, seed=0))]
    fn init(feature_dim: Option<usize>, plan: Option<&str>, seed: u64) -> PyResult<Self> {
        let plan = match (plan, feature_dim) {
            (Some(p), _) => serde_json::from_str(p).map_err(err)?,
            (None, Some(d)) => NetworkPlan::default_feature(d),
            (None, None) => return Err(err("give feature_dim or plan")),
        };
        Ok(PyModel {
            inner: Model {
                network: NetworkParams::init(plan, seed).map_err(err)?,
                standard: StandardScores::default(),
            },
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: Checkpoint::load(&path).map_err(err)?.model,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::new(self.inner.clone(), None, vec![]).save(&path).map_err(err)
    }

    fn score(&self, input: PyInput) -> PyResult<f64> {
        self.inner.score(&input.into()).map_err(err)
    }

    fn score_many(&self, inputs: Vec<PyInput>) -> PyResult<Vec<f64>> {
        let inputs: Vec<Input> = inputs.into_iter().map(Input::from).collect();
        self.inner.score_all(&inputs).map_err(err)
    }

    /// Per-frame `(raw, normalized, peak_index)`.
    fn score_sequence(&self, frames: Vec<PyInput>) -> PyResult<(Vec<f64>, Vec<f64>, usize)> {
        let frames: Vec<Input> = frames.into_iter().map(Input::from).collect();
        let s = eval::score_sequence(&frames, &self.inner).map_err(err)?;
        Ok((s.raw, s.normalized, s.peak_index))
    }

    /// `(global_anchors, relative_anchors)`.
    fn anchors(&self) -> (Vec<f64>, Vec<f64>) {
        let s = &self.inner.standard;
        (s.global_anchors.to_vec(), s.relative_anchor_vector().to_vec())
    }

    fn num_params(&self) -> usize {
        self.inner.network.num_params()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: serde_json::from_str(s).map_err(err)?,
        })
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

#[pyclass(name = "Dataset", module = "pycrowdrank", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(items: PathBuf, pairs: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: load_dataset(&items, &pairs).map_err(err)?,
        })
    }

    fn subset(&self, split: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self.inner.subset(parse_split(split)?),
        })
    }

    fn ids(&self) -> Vec<String> {
        self.inner.items.iter().map(|it| it.id.clone()).collect()
    }

    fn n_items(&self) -> usize {
        self.inner.items.len()
    }

    fn n_pairs(&self) -> usize {
        self.inner.pairs.len()
    }

    fn __len__(&self) -> usize {
        self.inner.items.len()
    }
}

#[pyclass(name = "SynthData", module = "pycrowdrank")]
struct PySynthData {
    inner: SynthDataset,
}

#[pymethods]
impl PySynthData {
    /// `config` is a JSON object; missing fields take their defaults.
    #[staticmethod]
    #[pyo3(signature = (config=None))]
    fn generate(config: Option<&str>) -> PyResult<Self> {
        let cfg: SynthConfig = from_json(config)?;
        Ok(PySynthData {
            inner: synth::generate(&cfg).map_err(err)?,
        })
    }

    #[getter]
    fn dataset(&self) -> PyDataset {
        PyDataset {
            inner: self.inner.dataset.clone(),
        }
    }

    #[getter]
    fn latents(&self) -> Vec<f64> {
        self.inner.latents.clone()
    }

    fn default_plan(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.config.input.default_plan()).map_err(err)
    }

    fn write(&self, out_dir: PathBuf) -> PyResult<()> {
        self.inner.write(&out_dir).map_err(err)
    }

    /// Spearman correlation of model scores with latents on the test split.
    fn rank_recovery(&self, model: &PyModel) -> PyResult<f64> {
        synth::rank_recovery_report(&model.inner, &self.inner).map_err(err)
    }
}

#[pyfunction]
fn global_probs(s: f64, anchors: Vec<f64>) -> Vec<f64> {
    loss::global_probs(s, &anchors)
}

#[pyfunction]
fn pairwise_probs(delta_s: f64, anchors: Vec<f64>) -> Vec<f64> {
    loss::pairwise_probs(delta_s, &anchors)
}

/// `(-d2, -d1, 0, d1, d2)` from the two log gaps.
#[pyfunction]
#[pyo3(signature = (a=0.0, b=0.0))]
fn relative_anchors(a: f64, b: f64) -> Vec<f64> {
    let s = StandardScores {
        relative_log_gaps: [a, b],
        ..Default::default()
    };
    s.relative_anchor_vector().to_vec()
}

#[pyfunction]
fn global_votes_to_distribution(votes: [u32; 3]) -> PyResult<Vec<f64>> {
    Ok(rating::votes_to_distribution(&GlobalVotes(votes)).map_err(err)?.probs().to_vec())
}

#[pyfunction]
fn pairwise_votes_to_distribution(votes: [u32; 5]) -> PyResult<Vec<f64>> {
    Ok(rating::votes_to_distribution(&PairwiseVotes(votes)).map_err(err)?.probs().to_vec())
}

/// Loss terms and gradients for one pair under default or given anchors.
#[pyfunction]
#[pyo3(signature = (s1, s2, global1, global2, relative, supervision="hybrid", global_anchors=None, relative_log_gaps=None))]
#[allow(clippy::too_many_arguments)]
fn hybrid_loss<'py>(
    py: Python<'py>,
    s1: f64,
    s2: f64,
    global1: [f64; 3],
    global2: [f64; 3],
    relative: [f64; 5],
    supervision: &str,
    global_anchors: Option<[f64; 3]>,
    relative_log_gaps: Option<[f64; 2]>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut standard = StandardScores::default();
    if let Some(g) = global_anchors {
        standard.global_anchors = g;
    }
    if let Some(r) = relative_log_gaps {
        standard.relative_log_gaps = r;
    }
    let g1 = RatingDistribution::global(global1).map_err(err)?;
    let g2 = RatingDistribution::global(global2).map_err(err)?;
    let r = RatingDistribution::pairwise(relative).map_err(err)?;
    let targets = PairTargets {
        global1: &g1,
        global2: &g2,
        relative: &r,
    };
    let b = loss::hybrid_loss(ScorePair { s1, s2 }, &targets, &standard, parse_supervision(supervision)?).map_err(err)?;
    let out = serde_json::json!({
        "total": b.total,
        "global1": b.global1,
        "global2": b.global2,
        "relative": b.relative,
        "lambda_raw": b.lambda_raw,
        "lambda": b.lambda,
        "grads": b.grads,
    });
    to_py(py, &out)
}

/// Feature-similarity pair sampling. Returns `(first_id, second_id)` tuples.
#[pyfunction]
#[pyo3(signature = (ids, features, pairs_per_item=5, seed=0, dedupe=false, threads=1))]
fn sample_pairs(
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
    pairs_per_item: usize,
    seed: u64,
    dedupe: bool,
    threads: usize,
) -> PyResult<Vec<(String, String)>> {
    let index = sampler::l2_normalize(ids, features).map_err(err)?;
    let opts = SampleOptions {
        pairs_per_item,
        seed,
        dedupe,
        threads,
    };
    let pairs = sampler::sample_pairs(&index, &opts).map_err(err)?;
    let ids = index.ids();
    Ok(pairs.into_iter().map(|(i, j)| (ids[i].clone(), ids[j].clone())).collect())
}

/// Two-stage training from `init` or a fresh network. Returns the model and
/// the per-epoch history.
#[pyfunction]
#[pyo3(signature = (dataset, config=None, init=None, plan=None))]
fn train_model<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    config: Option<&str>,
    init: Option<&PyModel>,
    plan: Option<&str>,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    let cfg: TrainConfig = from_json(config)?;
    let ds = &dataset.inner;
    let out = py
        .detach(|| match init {
            Some(m) => train::train_from(ds, m.inner.clone(), &cfg, &mut |_: &Model, _: &_, _: &_| Ok(())),
            None => {
                let plan = match plan {
                    Some(p) => serde_json::from_str(p).map_err(|e| crowdrank::Error::Config(e.to_string()))?,
                    None => default_plan_for(ds)?,
                };
                train::train(ds, plan, StandardScores::default(), &cfg)
            }
        })
        .map_err(err)?;
    let history = to_py(py, &out.history.epochs)?;
    Ok((PyModel { inner: out.model }, history))
}

fn default_plan_for(ds: &Dataset) -> crowdrank::Result<NetworkPlan> {
    match ds.items.first().map(|it| &it.input) {
        Some(Input::Feature(v)) => Ok(NetworkPlan::default_feature(v.len())),
        Some(Input::Image(t)) => Ok(NetworkPlan::default_image(t.height, t.width, t.channels)),
        None => Err(crowdrank::Error::Config("empty dataset".into())),
    }
}

/// Evaluation report as a dict. `options` is a JSON object of evaluation
/// options; `validation` supplies pairs for threshold selection.
#[pyfunction]
#[pyo3(signature = (model, dataset, validation=None, options=None))]
fn evaluate<'py>(
    py: Python<'py>,
    model: &PyModel,
    dataset: &PyDataset,
    validation: Option<&PyDataset>,
    options: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts: EvalOptions = from_json(options)?;
    let (report, roc) = eval::evaluate(&model.inner, &dataset.inner, validation.map(|v| &v.inner), &opts).map_err(err)?;
    let out = to_py(py, &report)?;
    out.set_item("roc", to_py(py, &roc.points)?)?;
    Ok(out)
}

#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    eval::spearman(&a, &b).map_err(err)
}

/// `(auc, [(threshold, fpr, tpr), ...])`.
#[pyfunction]
fn roc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<(f64, Vec<(f64, f64, f64)>)> {
    let c = eval::roc(&scores, &labels).map_err(err)?;
    Ok((c.auc, c.points.iter().map(|p| (p.threshold, p.fpr, p.tpr)).collect()))
}

#[pymodule]
fn pycrowdrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PySynthData>()?;
    m.add_function(wrap_pyfunction!(global_probs, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_probs, m)?)?;
    m.add_function(wrap_pyfunction!(relative_anchors, m)?)?;
    m.add_function(wrap_pyfunction!(global_votes_to_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_votes_to_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    Ok(())
}
